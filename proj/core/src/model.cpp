#include "ib/model.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ib/rng.hpp"

namespace ib::model {

namespace {

constexpr double kStdGuard = 1e-8;

double target_of(const Observation& o, Target t) {
  return t == Target::kConsumption ? o.c : o.f;
}

int self_channel(const Predictor& p) { return p.input_dim() - 1; }

Eigen::VectorXd normalize_input(const Predictor& p,
                                const Eigen::VectorXd& raw) {
  return (raw - p.in_mean).cwiseQuotient(p.in_std);
}

}  // namespace

Eigen::VectorXd Predictor::raw_input(const Steerings& s, double set_point,
                                     double self_value) const {
  Eigen::VectorXd x(input_dim());
  x[0] = s.v;
  x[1] = s.g;
  x[2] = s.h;
  x[3] = set_point;
  if (mode == InputMode::kSelfInput) x[4] = self_value;
  return x;
}

PredictorState initial_state(const Predictor& p) {
  return PredictorState{Eigen::VectorXd::Zero(p.hidden_dim)};
}

double predictor_step(const Predictor& p, PredictorState& state,
                      const Eigen::VectorXd& raw_input) {
  Eigen::VectorXd x = normalize_input(p, raw_input);
  state.h = (p.w_in * x + p.w_rec * state.h + p.b_h).array().tanh();
  double yn = p.w_out.dot(state.h) + p.b_out;
  return yn * p.target_std + p.target_mean;
}

// ---------------------------------------------------------------------------
// Training forward/backward

double window_loss(const Predictor& p, const TrainingWindow& w) {
  const int steps = static_cast<int>(w.steerings.size());
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p.hidden_dim);
  double prev_pred = 0.0;
  double loss = 0.0;
  for (int k = 0; k < steps; ++k) {
    double self_raw =
        (k <= w.past_steps) ? w.self_true[k] : prev_pred;
    Eigen::VectorXd x =
        normalize_input(p, p.raw_input(w.steerings[k], w.set_point, self_raw));
    h = (p.w_in * x + p.w_rec * h + p.b_h).array().tanh();
    double yn = p.w_out.dot(h) + p.b_out;
    prev_pred = yn * p.target_std + p.target_mean;
    if (k >= w.past_steps) {
      double yt = (w.targets[k] - p.target_mean) /
                  std::max(p.target_std, kStdGuard);
      loss += (yn - yt) * (yn - yt);
    }
  }
  return loss;
}

double window_loss_and_grad(const Predictor& p, const TrainingWindow& w,
                            PredictorGrad& grad) {
  const int steps = static_cast<int>(w.steerings.size());
  const int sc = self_channel(p);
  const bool self = p.mode == InputMode::kSelfInput;
  const double tstd = std::max(p.target_std, kStdGuard);

  std::vector<Eigen::VectorXd> xs(steps), hs(steps);
  std::vector<double> yns(steps);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p.hidden_dim);
  double prev_pred = 0.0;
  double loss = 0.0;
  for (int k = 0; k < steps; ++k) {
    double self_raw = (k <= w.past_steps) ? w.self_true[k] : prev_pred;
    xs[k] =
        normalize_input(p, p.raw_input(w.steerings[k], w.set_point, self_raw));
    h = (p.w_in * xs[k] + p.w_rec * h + p.b_h).array().tanh();
    hs[k] = h;
    yns[k] = p.w_out.dot(h) + p.b_out;
    prev_pred = yns[k] * p.target_std + p.target_mean;
    if (k >= w.past_steps) {
      double yt = (w.targets[k] - p.target_mean) / tstd;
      loss += (yns[k] - yt) * (yns[k] - yt);
    }
  }

  Eigen::VectorXd dz_next = Eigen::VectorXd::Zero(p.hidden_dim);
  for (int k = steps - 1; k >= 0; --k) {
    double gy = 0.0;
    if (k >= w.past_steps) {
      double yt = (w.targets[k] - p.target_mean) / tstd;
      gy = 2.0 * (yns[k] - yt);
    }
    if (self && k + 1 < steps && k + 1 > w.past_steps) {
      // x_{k+1}'s self channel is the denormalized prediction at k.
      gy += p.w_in.col(sc).dot(dz_next) * (p.target_std / p.in_std[sc]);
    }
    Eigen::VectorXd dh = p.w_out * gy + p.w_rec.transpose() * dz_next;
    Eigen::VectorXd dz =
        dh.cwiseProduct((1.0 - hs[k].array().square()).matrix());
    grad.w_in.noalias() += dz * xs[k].transpose();
    if (k > 0) grad.w_rec.noalias() += dz * hs[k - 1].transpose();
    grad.b_h += dz;
    grad.w_out += gy * hs[k];
    grad.b_out += gy;
    dz_next = dz;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct WindowRef {
  const Episode* episode;
  int start;
};

TrainingWindow make_window(const Episode& ep, int t0, int past, int future,
                           Target target) {
  TrainingWindow w;
  w.set_point = ep.set_point;
  w.past_steps = past;
  const int K = past + future;
  w.steerings.resize(K);
  w.self_true.resize(K);
  w.targets.resize(K);
  for (int k = 0; k < K; ++k) {
    const Observation& before = ep.observations[t0 + k];
    const Observation& after = ep.observations[t0 + k + 1];
    w.steerings[k] = Steerings{after.v, after.g, after.h};
    w.self_true[k] = target_of(before, target);
    w.targets[k] = target_of(after, target);
  }
  return w;
}

PredictorGrad zero_grad(const Predictor& p) {
  PredictorGrad g;
  g.w_in = Eigen::MatrixXd::Zero(p.hidden_dim, p.input_dim());
  g.w_rec = Eigen::MatrixXd::Zero(p.hidden_dim, p.hidden_dim);
  g.b_h = Eigen::VectorXd::Zero(p.hidden_dim);
  g.w_out = Eigen::VectorXd::Zero(p.hidden_dim);
  g.b_out = 0.0;
  return g;
}

// Flat parameter views for the iRPROP- update.
int param_count(const Predictor& p) {
  return static_cast<int>(p.w_in.size() + p.w_rec.size() + p.b_h.size() +
                          p.w_out.size() + 1);
}

void pack(const Predictor& p, Eigen::VectorXd& out) {
  int n = param_count(p);
  out.resize(n);
  int at = 0;
  auto put = [&](const double* data, int count) {
    std::copy(data, data + count, out.data() + at);
    at += count;
  };
  put(p.w_in.data(), static_cast<int>(p.w_in.size()));
  put(p.w_rec.data(), static_cast<int>(p.w_rec.size()));
  put(p.b_h.data(), static_cast<int>(p.b_h.size()));
  put(p.w_out.data(), static_cast<int>(p.w_out.size()));
  out[at++] = p.b_out;
}

void unpack(const Eigen::VectorXd& v, Predictor& p) {
  int at = 0;
  auto get = [&](double* data, int count) {
    std::copy(v.data() + at, v.data() + at + count, data);
    at += count;
  };
  get(p.w_in.data(), static_cast<int>(p.w_in.size()));
  get(p.w_rec.data(), static_cast<int>(p.w_rec.size()));
  get(p.b_h.data(), static_cast<int>(p.b_h.size()));
  get(p.w_out.data(), static_cast<int>(p.w_out.size()));
  p.b_out = v[at++];
}

void pack_grad(const PredictorGrad& g, Eigen::VectorXd& out) {
  int n = static_cast<int>(g.w_in.size() + g.w_rec.size() + g.b_h.size() +
                           g.w_out.size() + 1);
  out.resize(n);
  int at = 0;
  auto put = [&](const double* data, int count) {
    std::copy(data, data + count, out.data() + at);
    at += count;
  };
  put(g.w_in.data(), static_cast<int>(g.w_in.size()));
  put(g.w_rec.data(), static_cast<int>(g.w_rec.size()));
  put(g.b_h.data(), static_cast<int>(g.b_h.size()));
  put(g.w_out.data(), static_cast<int>(g.w_out.size()));
  out[at++] = g.b_out;
}

double validation_mae(const Predictor& p,
                      const std::vector<TrainingWindow>& windows) {
  double sum = 0.0;
  std::size_t count = 0;
  const double tstd = std::max(p.target_std, kStdGuard);
  for (const auto& w : windows) {
    const int steps = static_cast<int>(w.steerings.size());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.hidden_dim);
    double prev_pred = 0.0;
    for (int k = 0; k < steps; ++k) {
      double self_raw = (k <= w.past_steps) ? w.self_true[k] : prev_pred;
      Eigen::VectorXd x = normalize_input(
          p, p.raw_input(w.steerings[k], w.set_point, self_raw));
      h = (p.w_in * x + p.w_rec * h + p.b_h).array().tanh();
      double yn = p.w_out.dot(h) + p.b_out;
      prev_pred = yn * p.target_std + p.target_mean;
      if (k >= w.past_steps) {
        double yt = (w.targets[k] - p.target_mean) / tstd;
        sum += std::abs(yn - yt);
        ++count;
      }
    }
  }
  if (count == 0) return std::numeric_limits<double>::infinity();
  return sum / static_cast<double>(count);
}

struct RestartResult {
  Predictor predictor;
  double val_mae = std::numeric_limits<double>::infinity();
};

RestartResult train_one_restart(Predictor proto,
                                const std::vector<TrainingWindow>& train,
                                const std::vector<TrainingWindow>& val,
                                const ModelTrainConfig& cfg,
                                std::uint64_t restart_seed) {
  CounterRng rng(restart_seed);
  Predictor p = std::move(proto);
  auto init = [&](Eigen::MatrixXd& m, int fan_in) {
    double s = 0.5 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  };
  p.w_in = Eigen::MatrixXd::Zero(p.hidden_dim, p.input_dim());
  p.w_rec = Eigen::MatrixXd::Zero(p.hidden_dim, p.hidden_dim);
  p.b_h = Eigen::VectorXd::Zero(p.hidden_dim);
  p.w_out = Eigen::VectorXd::Zero(p.hidden_dim);
  init(p.w_in, p.input_dim());
  init(p.w_rec, p.hidden_dim);
  for (int i = 0; i < p.hidden_dim; ++i)
    p.w_out[i] = rng.uniform(-0.5, 0.5) / std::sqrt(p.hidden_dim);
  p.b_out = 0.0;

  const int n = param_count(p);
  Eigen::VectorXd params(n), gradv(n);
  pack(p, params);
  Eigen::VectorXd step = Eigen::VectorXd::Constant(n, 0.01);  // Delta_0
  Eigen::VectorXd prev_grad = Eigen::VectorXd::Zero(n);

  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = params;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    PredictorGrad g = zero_grad(p);
    for (const auto& w : train) window_loss_and_grad(p, w, g);
    pack_grad(g, gradv);

    // iRPROP-: on sign change, shrink the step and skip the update.
    for (int i = 0; i < n; ++i) {
      double prod = gradv[i] * prev_grad[i];
      if (prod > 0.0) {
        step[i] = std::min(step[i] * 1.2, 1.0);
      } else if (prod < 0.0) {
        step[i] = std::max(step[i] * 0.5, 1e-6);
        gradv[i] = 0.0;
      }
      if (gradv[i] > 0.0)
        params[i] -= step[i];
      else if (gradv[i] < 0.0)
        params[i] += step[i];
    }
    prev_grad = gradv;
    unpack(params, p);

    double vm = validation_mae(p, val);
    if (vm < best_val) {
      best_val = vm;
      best_params = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  unpack(best_params, p);
  return RestartResult{std::move(p), best_val};
}

}  // namespace

Predictor train_predictor(const TransitionBatch& data, Target target,
                          const ModelTrainConfig& cfg, std::uint64_t seed) {
  if (data.episodes.size() < 2) {
    throw std::invalid_argument("train_predictor: need at least 2 episodes");
  }
  Predictor proto;
  proto.target = target;
  if (target == Target::kConsumption) {
    proto.mode = InputMode::kNoSelfInput;
    proto.horizon = 30;
  } else {
    proto.mode = InputMode::kSelfInput;
    proto.horizon = 10;
  }
  proto.hidden_dim = 30;

  const int K = proto.horizon + cfg.future_steps;

  // Per-episode 70/30 split, whole trajectories on one side.
  std::vector<std::size_t> order(data.episodes.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng split_rng(CounterRng::derive(seed, 1000));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = split_rng.next_u64() % (i + 1);
    std::swap(order[i], order[j]);
  }
  std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(cfg.train_fraction *
                                  static_cast<double>(order.size())));
  if (n_train >= order.size()) n_train = order.size() - 1;

  CounterRng win_rng(CounterRng::derive(seed, 2000));
  auto sample_windows = [&](std::size_t ep_idx) {
    std::vector<TrainingWindow> out;
    const Episode& ep = data.episodes[ep_idx];
    int max_start = static_cast<int>(ep.steps()) - K;
    if (max_start < 0) return out;
    if (max_start + 1 <= cfg.windows_per_episode) {
      for (int t0 = 0; t0 <= max_start; ++t0)
        out.push_back(make_window(ep, t0, proto.horizon, cfg.future_steps,
                                  target));
    } else {
      for (int i = 0; i < cfg.windows_per_episode; ++i) {
        int t0 = static_cast<int>(win_rng.next_u64() %
                                  static_cast<std::uint64_t>(max_start + 1));
        out.push_back(make_window(ep, t0, proto.horizon, cfg.future_steps,
                                  target));
      }
    }
    return out;
  };

  std::vector<TrainingWindow> train_windows, val_windows;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto ws = sample_windows(order[i]);
    auto& dst = (i < n_train) ? train_windows : val_windows;
    dst.insert(dst.end(), std::make_move_iterator(ws.begin()),
               std::make_move_iterator(ws.end()));
  }
  if (train_windows.empty() || val_windows.empty()) {
    throw std::invalid_argument(
        "train_predictor: episodes too short for the unroll length");
  }

  // Normalization statistics from the training windows.
  const int in_dim = proto.input_dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(in_dim);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(in_dim);
  double tmean = 0.0, tsq = 0.0;
  std::size_t count = 0;
  for (const auto& w : train_windows) {
    for (std::size_t k = 0; k < w.steerings.size(); ++k) {
      Eigen::VectorXd raw =
          proto.raw_input(w.steerings[k], w.set_point, w.self_true[k]);
      mean += raw;
      sq += raw.cwiseProduct(raw);
      tmean += w.targets[k];
      tsq += w.targets[k] * w.targets[k];
      ++count;
    }
  }
  double nc = static_cast<double>(count);
  mean /= nc;
  tmean /= nc;
  proto.in_mean = mean;
  proto.in_std = (sq / nc - mean.cwiseProduct(mean))
                     .cwiseMax(0.0)
                     .cwiseSqrt()
                     .cwiseMax(kStdGuard);
  proto.target_mean = tmean;
  proto.target_std = std::max(std::sqrt(std::max(0.0, tsq / nc - tmean * tmean)),
                              kStdGuard);

  std::vector<RestartResult> results(cfg.restarts);
  auto run = [&](int r) {
    results[r] = train_one_restart(proto, train_windows, val_windows, cfg,
                                   CounterRng::derive(seed, 100 + r));
  };
  if (cfg.n_threads <= 1 || cfg.restarts == 1) {
    for (int r = 0; r < cfg.restarts; ++r) run(r);
  } else {
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    int nw = std::min(cfg.n_threads, cfg.restarts);
    for (int w = 0; w < nw; ++w) {
      workers.emplace_back([&] {
        for (int r = next.fetch_add(1); r < cfg.restarts;
             r = next.fetch_add(1))
          run(r);
      });
    }
    for (auto& t : workers) t.join();
  }

  int best = 0;
  for (int r = 1; r < cfg.restarts; ++r) {
    if (results[r].val_mae < results[best].val_mae) best = r;
  }

  // Constant-mean baseline in the same normalized space.
  double baseline = 0.0;
  std::size_t bcount = 0;
  for (const auto& w : val_windows) {
    for (std::size_t k = static_cast<std::size_t>(w.past_steps);
         k < w.targets.size(); ++k) {
      baseline += std::abs((w.targets[k] - proto.target_mean) /
                           proto.target_std);
      ++bcount;
    }
  }
  baseline /= static_cast<double>(bcount);
  // An (almost) constant target makes the mean itself the optimal predictor,
  // so the sanity check is unbeatable; skip it there. Real datasets have a
  // normalized baseline MAE of O(1) and the check stays active.
  if (baseline < 1e-3) return std::move(results[best].predictor);
  if (!(results[best].val_mae < baseline)) {
    throw std::runtime_error(
        "train_predictor: no restart beat the mean-baseline validation error "
        "(target " +
        std::string(target == Target::kConsumption ? "consumption" : "fatigue") +
        ", best " + std::to_string(results[best].val_mae) + " vs baseline " +
        std::to_string(baseline) + ")");
  }
  return std::move(results[best].predictor);
}

SystemModel train_system_model(const TransitionBatch& data,
                               const ModelTrainConfig& cfg,
                               std::uint64_t seed) {
  SystemModel m;
  m.consumption = train_predictor(data, Target::kConsumption, cfg,
                                  CounterRng::derive(seed, 1));
  m.fatigue =
      train_predictor(data, Target::kFatigue, cfg, CounterRng::derive(seed, 2));
  return m;
}

// ---------------------------------------------------------------------------
// Rollouts

RolloutState prime_rollout(const SystemModel& m, const HistoryWindow& hist) {
  const int need = std::max(m.consumption.horizon, m.fatigue.horizon) + 1;
  if (static_cast<int>(hist.size()) < need) {
    throw std::invalid_argument("prime_rollout: history shorter than horizon");
  }
  RolloutState st;
  st.c_state = initial_state(m.consumption);
  st.f_state = initial_state(m.fatigue);
  const int last = static_cast<int>(hist.size()) - 1;

  auto feed = [&](const Predictor& p, PredictorState& ps) {
    for (int k = last - p.horizon; k < last; ++k) {
      const Observation& before = hist[k];
      const Observation& after = hist[k + 1];
      Steerings s{after.v, after.g, after.h};
      predictor_step(p, ps, p.raw_input(s, after.p, target_of(before, p.target)));
    }
  };
  feed(m.consumption, st.c_state);
  feed(m.fatigue, st.f_state);

  st.steerings = Steerings{hist[last].v, hist[last].g, hist[last].h};
  st.set_point = hist[last].p;
  st.last_c = hist[last].c;
  st.last_f = hist[last].f;
  return st;
}

std::pair<Observation, double> rollout_step(const SystemModel& m,
                                            RolloutState& state,
                                            const ActionDelta& a) {
  state.steerings = apply_action(state.steerings, a);
  double c = predictor_step(
      m.consumption, state.c_state,
      m.consumption.raw_input(state.steerings, state.set_point, state.last_c));
  double f = predictor_step(
      m.fatigue, state.f_state,
      m.fatigue.raw_input(state.steerings, state.set_point, state.last_f));
  state.last_c = c;
  state.last_f = f;

  Observation o;
  o.v = state.steerings.v;
  o.g = state.steerings.g;
  o.h = state.steerings.h;
  o.p = state.set_point;
  o.c = std::max(0.0, c);
  o.f = std::max(0.0, f);
  double r = compute_reward(o.c, o.f);
  return {o, r};
}

std::pair<Observation, double> predict_step(const SystemModel& m,
                                            const HistoryWindow& hist,
                                            const ActionDelta& a) {
  RolloutState st = prime_rollout(m, hist);
  return rollout_step(m, st, a);
}

double rollout_return_primed(const SystemModel& m, RolloutState state,
                             const Eigen::VectorXd& action_sequence,
                             double gamma) {
  if (action_sequence.size() % 3 != 0 || action_sequence.size() == 0) {
    throw std::invalid_argument("action sequence length must be 3*T, T >= 1");
  }
  const int T = static_cast<int>(action_sequence.size()) / 3;
  double ret = 0.0;
  double g = 1.0;
  for (int t = 0; t < T; ++t) {
    ActionDelta a(action_sequence[3 * t], action_sequence[3 * t + 1],
                  action_sequence[3 * t + 2]);
    auto [obs, r] = rollout_step(m, state, a);
    ret += g * r;
    g *= gamma;
  }
  return ret;
}

double rollout_return(const SystemModel& m, const HistoryWindow& hist,
                      const Eigen::VectorXd& action_sequence, double gamma) {
  return rollout_return_primed(m, prime_rollout(m, hist), action_sequence,
                               gamma);
}

void observe_step(const SystemModel& m, RolloutState& state,
                  const Observation& prev, const Observation& next) {
  Steerings s{next.v, next.g, next.h};
  predictor_step(m.consumption, state.c_state,
                 m.consumption.raw_input(s, next.p, prev.c));
  predictor_step(m.fatigue, state.f_state,
                 m.fatigue.raw_input(s, next.p, prev.f));
  state.steerings = s;
  state.set_point = next.p;
  state.last_c = next.c;
  state.last_f = next.f;
}

ErrorProfile rollout_error_profile(const SystemModel& m,
                                   const std::vector<Episode>& episodes,
                                   int steps) {
  if (episodes.empty()) {
    throw std::invalid_argument("rollout_error_profile: no episodes");
  }
  const int H = std::max(m.consumption.horizon, m.fatigue.horizon);
  ErrorProfile prof;
  prof.c_mae = Eigen::VectorXd::Zero(steps);
  prof.f_mae = Eigen::VectorXd::Zero(steps);
  for (const Episode& ep : episodes) {
    if (static_cast<int>(ep.steps()) < H + steps) {
      throw std::invalid_argument(
          "rollout_error_profile: episode shorter than horizon + steps");
    }
    HistoryWindow hist(ep.observations.begin(),
                       ep.observations.begin() + H + 1);
    RolloutState st = prime_rollout(m, hist);
    for (int k = 1; k <= steps; ++k) {
      auto [obs, r] = rollout_step(m, st, ep.actions[H + k - 1]);
      const Observation& truth = ep.observations[H + k];
      prof.c_mae[k - 1] += std::abs(obs.c - truth.c);
      prof.f_mae[k - 1] += std::abs(obs.f - truth.f);
    }
  }
  prof.c_mae /= static_cast<double>(episodes.size());
  prof.f_mae /= static_cast<double>(episodes.size());
  return prof;
}

// ---------------------------------------------------------------------------
// Serialization

std::uint64_t weights_hash(const SystemModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double d) {
    h ^= std::bit_cast<std::uint64_t>(d);
    h *= 0x100000001b3ULL;
  };
  auto mix_pred = [&](const Predictor& p) {
    for (int i = 0; i < p.w_in.size(); ++i) mix(p.w_in.data()[i]);
    for (int i = 0; i < p.w_rec.size(); ++i) mix(p.w_rec.data()[i]);
    for (int i = 0; i < p.b_h.size(); ++i) mix(p.b_h[i]);
    for (int i = 0; i < p.w_out.size(); ++i) mix(p.w_out[i]);
    mix(p.b_out);
    for (int i = 0; i < p.in_mean.size(); ++i) mix(p.in_mean[i]);
    for (int i = 0; i < p.in_std.size(); ++i) mix(p.in_std[i]);
    mix(p.target_mean);
    mix(p.target_std);
  };
  mix_pred(m.consumption);
  mix_pred(m.fatigue);
  return h;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  auto rows = static_cast<int>(j.size());
  auto cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

nlohmann::json predictor_to_json(const Predictor& p) {
  return nlohmann::json{
      {"architecture", "rnn-tanh-linear"},
      {"target", p.target == Target::kConsumption ? "consumption" : "fatigue"},
      {"mode",
       p.mode == InputMode::kSelfInput ? "self-input" : "no-self-input"},
      {"horizon", p.horizon},
      {"hidden_dim", p.hidden_dim},
      {"w_in", matrix_to_json(p.w_in)},
      {"w_rec", matrix_to_json(p.w_rec)},
      {"b_h", vector_to_json(p.b_h)},
      {"w_out", vector_to_json(p.w_out)},
      {"b_out", p.b_out},
      {"in_mean", vector_to_json(p.in_mean)},
      {"in_std", vector_to_json(p.in_std)},
      {"target_mean", p.target_mean},
      {"target_std", p.target_std}};
}

Predictor predictor_from_json(const nlohmann::json& j) {
  Predictor p;
  p.target = j.at("target").get<std::string>() == "consumption"
                 ? Target::kConsumption
                 : Target::kFatigue;
  p.mode = j.at("mode").get<std::string>() == "self-input"
               ? InputMode::kSelfInput
               : InputMode::kNoSelfInput;
  p.horizon = j.at("horizon").get<int>();
  p.hidden_dim = j.at("hidden_dim").get<int>();
  p.w_in = matrix_from_json(j.at("w_in"));
  p.w_rec = matrix_from_json(j.at("w_rec"));
  p.b_h = vector_from_json(j.at("b_h"));
  p.w_out = vector_from_json(j.at("w_out"));
  p.b_out = j.at("b_out").get<double>();
  p.in_mean = vector_from_json(j.at("in_mean"));
  p.in_std = vector_from_json(j.at("in_std"));
  p.target_mean = j.at("target_mean").get<double>();
  p.target_std = j.at("target_std").get<double>();
  return p;
}

}  // namespace

void save_model(const SystemModel& m, const std::string& path) {
  nlohmann::json j{{"format", "ib-system-model"},
                   {"version", 1},
                   {"consumption", predictor_to_json(m.consumption)},
                   {"fatigue", predictor_to_json(m.fatigue)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

SystemModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "ib-system-model") {
    throw std::runtime_error("not a system model file: " + path);
  }
  SystemModel m;
  m.consumption = predictor_from_json(j.at("consumption"));
  m.fatigue = predictor_from_json(j.at("fatigue"));
  return m;
}

}  // namespace ib::model
