#include "ib/rcnn.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace ib::rcnn {

namespace {

Eigen::VectorXd normalize(const model::Predictor& p,
                          const Eigen::VectorXd& raw) {
  return (raw - p.in_mean).cwiseQuotient(p.in_std);
}

}  // namespace

PolicyNetwork make_policy(int input_dim, CounterRng& rng, int hidden1,
                          int hidden2) {
  PolicyNetwork net;
  auto init = [&](Eigen::MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    double s = 0.5 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-s, s);
  };
  init(net.w1, hidden1, input_dim);
  init(net.w2, hidden2, hidden1);
  init(net.w3, 3, hidden2);
  net.b1 = Eigen::VectorXd::Zero(hidden1);
  net.b2 = Eigen::VectorXd::Zero(hidden2);
  net.b3 = Eigen::VectorXd::Zero(3);
  return net;
}

Eigen::Vector3d policy_forward_raw(const PolicyNetwork& net,
                                   const Eigen::VectorXd& model_hidden) {
  Eigen::VectorXd a1 = (net.w1 * model_hidden + net.b1).array().tanh();
  Eigen::VectorXd a2 = (net.w2 * a1 + net.b2).array().tanh();
  return (net.w3 * a2 + net.b3).array().sin();
}

ActionDelta policy_forward(const PolicyNetwork& net,
                           const Eigen::VectorXd& model_hidden) {
  Eigen::Vector3d a = policy_forward_raw(net, model_hidden);
  return ActionDelta(a[0], a[1], a[2]);
}

Eigen::VectorXd policy_input(const model::RolloutState& state) {
  Eigen::VectorXd u(state.c_state.h.size() + state.f_state.h.size());
  u << state.c_state.h, state.f_state.h;
  return u;
}

PolicyGrad zero_policy_grad(const PolicyNetwork& net) {
  PolicyGrad g;
  g.w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
  g.w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
  g.w3 = Eigen::MatrixXd::Zero(net.w3.rows(), net.w3.cols());
  g.b1 = Eigen::VectorXd::Zero(net.b1.size());
  g.b2 = Eigen::VectorXd::Zero(net.b2.size());
  g.b3 = Eigen::VectorXd::Zero(net.b3.size());
  return g;
}

namespace {

struct StepCache {
  Eigen::VectorXd u;        // policy input
  Eigen::VectorXd a1, a2;   // policy hidden activations
  Eigen::Vector3d z3;       // output pre-activations (action = sin(z3))
  bool unclamped[3];        // steering clamp pass-through flags
  Eigen::VectorXd x_c, x_f; // normalized model inputs
  Eigen::VectorXd hc, hf;   // model hidden states after the step
};

double clamp_steer(double x, bool& unclamped) {
  unclamped = x >= 0.0 && x <= 100.0;
  return std::min(100.0, std::max(0.0, x));
}

}  // namespace

double rollout_loss(const model::SystemModel& m, const PolicyNetwork& net,
                    const model::RolloutState& start, int steps,
                    double gamma) {
  model::RolloutState st = start;
  double loss = 0.0;
  double g = 1.0;
  for (int t = 0; t < steps; ++t) {
    ActionDelta a = policy_forward(net, policy_input(st));
    st.steerings = apply_action(st.steerings, a);
    double c = 0.0, f = 0.0;
    {
      Eigen::VectorXd x = normalize(
          m.consumption,
          m.consumption.raw_input(st.steerings, st.set_point, st.last_c));
      st.c_state.h = (m.consumption.w_in * x +
                      m.consumption.w_rec * st.c_state.h + m.consumption.b_h)
                         .array()
                         .tanh();
      c = (m.consumption.w_out.dot(st.c_state.h) + m.consumption.b_out) *
              m.consumption.target_std +
          m.consumption.target_mean;
    }
    {
      Eigen::VectorXd x = normalize(
          m.fatigue, m.fatigue.raw_input(st.steerings, st.set_point, st.last_f));
      st.f_state.h =
          (m.fatigue.w_in * x + m.fatigue.w_rec * st.f_state.h + m.fatigue.b_h)
              .array()
              .tanh();
      f = (m.fatigue.w_out.dot(st.f_state.h) + m.fatigue.b_out) *
              m.fatigue.target_std +
          m.fatigue.target_mean;
    }
    st.last_c = c;
    st.last_f = f;
    loss += g * (c + 3.0 * f);
    g *= gamma;
  }
  return loss;
}

double rollout_loss_and_grad(const model::SystemModel& m,
                             const PolicyNetwork& net,
                             const model::RolloutState& start, int steps,
                             double gamma, PolicyGrad& grad) {
  const model::Predictor& pc = m.consumption;
  const model::Predictor& pf = m.fatigue;
  const int nc = pc.hidden_dim;
  const int nf = pf.hidden_dim;
  const bool c_self = pc.mode == model::InputMode::kSelfInput;
  const bool f_self = pf.mode == model::InputMode::kSelfInput;

  std::vector<StepCache> cache(steps);
  model::RolloutState st = start;
  double loss = 0.0;
  double disc = 1.0;

  for (int t = 0; t < steps; ++t) {
    StepCache& ck = cache[t];
    ck.u = policy_input(st);
    ck.a1 = (net.w1 * ck.u + net.b1).array().tanh();
    ck.a2 = (net.w2 * ck.a1 + net.b2).array().tanh();
    ck.z3 = net.w3 * ck.a2 + net.b3;
    Eigen::Vector3d action = ck.z3.array().sin();

    Steerings s;
    s.v = clamp_steer(st.steerings.v + kVelocityScale * action[0],
                      ck.unclamped[0]);
    s.g = clamp_steer(st.steerings.g + kGainScale * action[1],
                      ck.unclamped[1]);
    s.h = clamp_steer(st.steerings.h + kShiftScale * action[2],
                      ck.unclamped[2]);
    st.steerings = s;

    ck.x_c = normalize(pc, pc.raw_input(s, st.set_point, st.last_c));
    st.c_state.h =
        (pc.w_in * ck.x_c + pc.w_rec * st.c_state.h + pc.b_h).array().tanh();
    ck.hc = st.c_state.h;
    double c =
        (pc.w_out.dot(ck.hc) + pc.b_out) * pc.target_std + pc.target_mean;

    ck.x_f = normalize(pf, pf.raw_input(s, st.set_point, st.last_f));
    st.f_state.h =
        (pf.w_in * ck.x_f + pf.w_rec * st.f_state.h + pf.b_h).array().tanh();
    ck.hf = st.f_state.h;
    double f =
        (pf.w_out.dot(ck.hf) + pf.b_out) * pf.target_std + pf.target_mean;

    st.last_c = c;
    st.last_f = f;
    loss += disc * (c + 3.0 * f);
    disc *= gamma;
  }

  // Backward pass; model weights stay frozen, only policy grads accumulate.
  Eigen::VectorXd dzc_next = Eigen::VectorXd::Zero(nc);
  Eigen::VectorXd dzf_next = Eigen::VectorXd::Zero(nf);
  Eigen::VectorXd du_next;  // policy-input adjoint from step t+1
  double dv_next = 0.0, dg_next = 0.0, dh_next = 0.0;
  double dc_fb = 0.0, df_fb = 0.0;  // fed-back prediction adjoints

  for (int t = steps - 1; t >= 0; --t) {
    const StepCache& ck = cache[t];
    double g_t = std::pow(gamma, t);

    double dC = g_t + dc_fb;        // adjoint of raw c prediction at t
    double dF = 3.0 * g_t + df_fb;  // adjoint of raw f prediction at t

    Eigen::VectorXd dhc = pc.w_out * (dC * pc.target_std);
    dhc.noalias() += pc.w_rec.transpose() * dzc_next;
    Eigen::VectorXd dhf = pf.w_out * (dF * pf.target_std);
    dhf.noalias() += pf.w_rec.transpose() * dzf_next;
    if (du_next.size() > 0) {
      dhc += du_next.head(nc);
      dhf += du_next.tail(nf);
    }

    Eigen::VectorXd dzc =
        dhc.cwiseProduct((1.0 - ck.hc.array().square()).matrix());
    Eigen::VectorXd dzf =
        dhf.cwiseProduct((1.0 - ck.hf.array().square()).matrix());
    Eigen::VectorXd dx_c = pc.w_in.transpose() * dzc;
    Eigen::VectorXd dx_f = pf.w_in.transpose() * dzf;

    dc_fb = c_self ? dx_c[4] / pc.in_std[4] : 0.0;
    df_fb = f_self ? dx_f[4] / pf.in_std[4] : 0.0;

    double dv = dx_c[0] / pc.in_std[0] + dx_f[0] / pf.in_std[0] + dv_next;
    double dg = dx_c[1] / pc.in_std[1] + dx_f[1] / pf.in_std[1] + dg_next;
    double dh = dx_c[2] / pc.in_std[2] + dx_f[2] / pf.in_std[2] + dh_next;

    Eigen::Vector3d da;
    da[0] = ck.unclamped[0] ? dv * kVelocityScale : 0.0;
    da[1] = ck.unclamped[1] ? dg * kGainScale : 0.0;
    da[2] = ck.unclamped[2] ? dh * kShiftScale : 0.0;
    dv_next = ck.unclamped[0] ? dv : 0.0;
    dg_next = ck.unclamped[1] ? dg : 0.0;
    dh_next = ck.unclamped[2] ? dh : 0.0;

    Eigen::Vector3d dz3 = da.cwiseProduct(ck.z3.array().cos().matrix());
    grad.w3.noalias() += dz3 * ck.a2.transpose();
    grad.b3 += dz3;
    Eigen::VectorXd da2 = net.w3.transpose() * dz3;
    Eigen::VectorXd dz2 =
        da2.cwiseProduct((1.0 - ck.a2.array().square()).matrix());
    grad.w2.noalias() += dz2 * ck.a1.transpose();
    grad.b2 += dz2;
    Eigen::VectorXd da1 = net.w2.transpose() * dz2;
    Eigen::VectorXd dz1 =
        da1.cwiseProduct((1.0 - ck.a1.array().square()).matrix());
    grad.w1.noalias() += dz1 * ck.u.transpose();
    grad.b1 += dz1;
    du_next = net.w1.transpose() * dz1;

    dzc_next = dzc;
    dzf_next = dzf;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

std::vector<int> default_snapshot_ladder(int max_epochs) {
  static const int ladder[] = {1,   2,   4,   6,    10,   15,   23,  34,
                               50,  72,  104, 149,  213,  303,  431, 612,
                               868, 1230, 1742, 2466, 3490, 4938};
  std::vector<int> out;
  for (int e : ladder) {
    if (e <= max_epochs) out.push_back(e);
  }
  if (out.empty() || out.back() != max_epochs) out.push_back(max_epochs);
  return out;
}

namespace {

std::vector<model::HistoryWindow> sample_histories(const TransitionBatch& data,
                                                   int history_len, int count,
                                                   CounterRng& rng) {
  std::vector<model::HistoryWindow> out;
  std::vector<const Episode*> usable;
  for (const auto& ep : data.episodes) {
    if (static_cast<int>(ep.observations.size()) >= history_len)
      usable.push_back(&ep);
  }
  if (usable.empty()) {
    throw std::invalid_argument("episodes shorter than the model horizon");
  }
  for (int i = 0; i < count; ++i) {
    const Episode& ep = *usable[rng.next_u64() % usable.size()];
    int max_start = static_cast<int>(ep.observations.size()) - history_len;
    int t0 = static_cast<int>(rng.next_u64() %
                              static_cast<std::uint64_t>(max_start + 1));
    out.emplace_back(ep.observations.begin() + t0,
                     ep.observations.begin() + t0 + history_len);
  }
  return out;
}

}  // namespace

TrainingRun train_rcnn_run(const model::SystemModel& m,
                           const TransitionBatch& data,
                           const RcnnTrainConfig& cfg, double learning_rate,
                           std::uint64_t seed) {
  const int history_len =
      std::max(m.consumption.horizon, m.fatigue.horizon) + 1;
  const double gamma = cfg.rollout_steps > 1
                           ? std::pow(cfg.terminal_weight,
                                      1.0 / (cfg.rollout_steps - 1))
                           : 1.0;
  CounterRng rng(CounterRng::derive(seed, 0));
  PolicyNetwork net =
      make_policy(m.consumption.hidden_dim + m.fatigue.hidden_dim, rng);

  std::vector<int> ladder = cfg.snapshot_epochs.empty()
                                ? default_snapshot_ladder(cfg.epochs)
                                : cfg.snapshot_epochs;

  TrainingRun run;
  run.learning_rate = learning_rate;
  std::size_t next_snap = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int s = 0; s < cfg.samples_per_epoch; ++s) {
      auto hist = sample_histories(data, history_len, 1, rng);
      model::RolloutState st = model::prime_rollout(m, hist[0]);
      PolicyGrad grad = zero_policy_grad(net);
      double loss =
          rollout_loss_and_grad(m, net, st, cfg.rollout_steps, gamma, grad);
      if (!std::isfinite(loss)) {
        run.diverged = true;
        return run;
      }
      net.w1 -= learning_rate * grad.w1;
      net.b1 -= learning_rate * grad.b1;
      net.w2 -= learning_rate * grad.w2;
      net.b2 -= learning_rate * grad.b2;
      net.w3 -= learning_rate * grad.w3;
      net.b3 -= learning_rate * grad.b3;
    }
    while (next_snap < ladder.size() && ladder[next_snap] == epoch) {
      run.snapshots.push_back(RcnnSnapshot{epoch, net});
      ++next_snap;
    }
  }
  if (run.snapshots.empty() || run.snapshots.back().epoch != cfg.epochs) {
    run.snapshots.push_back(RcnnSnapshot{cfg.epochs, net});
  }
  return run;
}

double self_assess(const PolicyNetwork& policy, const model::SystemModel& m,
                   const std::vector<model::HistoryWindow>& histories,
                   int horizon) {
  if (histories.empty()) {
    throw std::invalid_argument("self_assess: no histories");
  }
  double total = 0.0;
  for (const auto& hist : histories) {
    model::RolloutState st = model::prime_rollout(m, hist);
    double sum = 0.0;
    for (int t = 0; t < horizon; ++t) {
      ActionDelta a = policy_forward(policy, policy_input(st));
      auto [obs, r] = model::rollout_step(m, st, a);
      sum += r;
    }
    total += sum / static_cast<double>(horizon);
  }
  return total / static_cast<double>(histories.size());
}

PolicyNetwork train_rcnn_policy(const model::SystemModel& m,
                                const TransitionBatch& data,
                                const RcnnTrainConfig& cfg,
                                std::uint64_t seed) {
  const int history_len =
      std::max(m.consumption.horizon, m.fatigue.horizon) + 1;
  CounterRng assess_rng(CounterRng::derive(seed, 999));
  auto histories = sample_histories(data, history_len, cfg.assess_histories,
                                    assess_rng);

  const PolicyNetwork* best = nullptr;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<TrainingRun> runs;
  runs.reserve(cfg.runs);
  for (int r = 0; r < cfg.runs; ++r) {
    CounterRng lr_rng(CounterRng::derive(seed, 500 + r));
    double lr = std::exp(
        lr_rng.uniform(std::log(cfg.lr_min), std::log(cfg.lr_max)));
    runs.push_back(
        train_rcnn_run(m, data, cfg, lr, CounterRng::derive(seed, r)));
    for (const auto& snap : runs.back().snapshots) {
      double v = self_assess(snap.policy, m, histories, cfg.assess_horizon);
      if (v > best_value) {
        best_value = v;
        best = &snap.policy;
      }
    }
  }
  if (!best) {
    throw std::runtime_error("train_rcnn_policy: every run diverged");
  }
  return *best;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json mat_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd mat_from(const nlohmann::json& j) {
  auto rows = static_cast<int>(j.size());
  auto cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  return m;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vec_from(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

void save_policy(const PolicyNetwork& net, std::uint64_t model_hash,
                 const std::string& path) {
  nlohmann::json j{{"format", "ib-rcnn-policy"},
                   {"version", 1},
                   {"model_hash", model_hash},
                   {"w1", mat_json(net.w1)}, {"b1", vec_json(net.b1)},
                   {"w2", mat_json(net.w2)}, {"b2", vec_json(net.b2)},
                   {"w3", mat_json(net.w3)}, {"b3", vec_json(net.b3)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

PolicyNetwork load_policy(const std::string& path, std::uint64_t model_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "ib-rcnn-policy") {
    throw std::runtime_error("not an RCNN policy file: " + path);
  }
  if (j.at("model_hash").get<std::uint64_t>() != model_hash) {
    throw std::runtime_error(
        "policy was trained against a different system model");
  }
  PolicyNetwork net;
  net.w1 = mat_from(j.at("w1"));
  net.b1 = vec_from(j.at("b1"));
  net.w2 = mat_from(j.at("w2"));
  net.b2 = vec_from(j.at("b2"));
  net.w3 = mat_from(j.at("w3"));
  net.b3 = vec_from(j.at("b3"));
  return net;
}

}  // namespace ib::rcnn
