#include "ib/nfq.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace ib::nfq {

namespace {

constexpr double kStdGuard = 1e-8;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::array<ActionDelta, 27>& discretize_actions() {
  static std::array<ActionDelta, 27> actions = [] {
    std::array<ActionDelta, 27> out;
    int i = 0;
    for (int dv = -1; dv <= 1; ++dv)
      for (int dg = -1; dg <= 1; ++dg)
        for (int dh = -1; dh <= 1; ++dh) out[i++] = ActionDelta(dv, dg, dh);
    return out;
  }();
  return actions;
}

NormalizationStats zscore_fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw std::invalid_argument("zscore_fit: no rows");
  NormalizationStats s;
  s.mean = rows.colwise().mean();
  Eigen::VectorXd var =
      (rows.rowwise() - s.mean.transpose()).array().square().colwise().mean();
  s.stddev = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdGuard);
  return s;
}

Eigen::VectorXd zscore_apply(const NormalizationStats& stats,
                             const Eigen::VectorXd& x) {
  return (x - stats.mean).cwiseQuotient(stats.stddev);
}

QScaling fit_q_scaling(const Eigen::VectorXd& targets) {
  if (targets.size() == 0) throw std::invalid_argument("fit_q_scaling: empty");
  QScaling s;
  s.lo = targets.minCoeff();
  s.hi = targets.maxCoeff();
  return s;
}

double scale_q(const QScaling& s, double raw) {
  if (s.hi <= s.lo) return 0.5;
  return 0.1 + 0.8 * (raw - s.lo) / (s.hi - s.lo);
}

double unscale_q(const QScaling& s, double scaled) {
  if (s.hi <= s.lo) return s.lo;
  return s.lo + (scaled - 0.1) / 0.8 * (s.hi - s.lo);
}

double Mlp::forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd h = (w1 * x + b1).unaryExpr([](double z) { return logistic(z); });
  return logistic(w2.dot(h) + b2);
}

Mlp make_mlp(int inputs, int hidden, CounterRng& rng) {
  Mlp net;
  net.w1.resize(hidden, inputs);
  net.b1.resize(hidden);
  net.w2.resize(hidden);
  for (int i = 0; i < net.w1.size(); ++i)
    net.w1.data()[i] = rng.uniform(-0.1, 0.1);
  for (int i = 0; i < hidden; ++i) net.b1[i] = rng.uniform(-0.1, 0.1);
  for (int i = 0; i < hidden; ++i) net.w2[i] = rng.uniform(-0.1, 0.1);
  net.b2 = rng.uniform(-0.1, 0.1);
  return net;
}

double mlp_loss_and_grad(const Mlp& net, const Eigen::VectorXd& x,
                         double target, MlpGrad& grad) {
  Eigen::VectorXd h =
      (net.w1 * x + net.b1).unaryExpr([](double z) { return logistic(z); });
  double out = logistic(net.w2.dot(h) + net.b2);
  double err = out - target;
  double loss = err * err;

  double dout = 2.0 * err * out * (1.0 - out);
  Eigen::VectorXd dh =
      (net.w2 * dout).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
  grad.w1 = dh * x.transpose();
  grad.b1 = dh;
  grad.w2 = dout * h;
  grad.b2 = dout;
  return loss;
}

Eigen::VectorXd q_input(const Observation& o, const ActionDelta& a) {
  Eigen::VectorXd x(9);
  x << o.v, o.g, o.h, o.p, o.c, o.f, a.dv(), a.dg(), a.dh();
  return x;
}

double QFunction::raw_value(const Observation& o, const ActionDelta& a) const {
  if (!trained) return 0.0;
  return unscale_q(scaling, net.forward(zscore_apply(stats, q_input(o, a))));
}

QFunction nfq_iterate(const std::vector<Transition>& rows, const QFunction& q,
                      double gamma, const NfqConfig& cfg, CounterRng& rng) {
  if (rows.empty()) throw std::invalid_argument("nfq_iterate: empty batch");
  const auto n = rows.size();
  const auto& actions = discretize_actions();

  // Targets in unscaled space.
  Eigen::VectorXd targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const ActionDelta& a : actions) {
      best = std::max(best, q.raw_value(rows[i].next_obs, a));
    }
    targets[i] = rows[i].reward + gamma * best;
    if (!std::isfinite(targets[i])) {
      throw std::runtime_error("nfq_iterate: non-finite target");
    }
  }

  QFunction out = q;
  out.scaling = fit_q_scaling(targets);
  out.trained = true;

  std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction *
                                               static_cast<double>(n));
  std::size_t n_train = n - n_val;
  if (n_train == 0) n_train = n;

  std::vector<Eigen::VectorXd> inputs(n);
  Eigen::VectorXd scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = zscore_apply(out.stats, q_input(rows[i].obs, rows[i].action));
    scaled[i] = scale_q(out.scaling, targets[i]);
  }

  auto val_mse = [&](const Mlp& net) {
    if (n_val == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = n_train; i < n; ++i) {
      double d = net.forward(inputs[i]) - scaled[i];
      s += d * d;
    }
    return s / static_cast<double>(n_val);
  };

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  MlpGrad grad;
  double best_val = val_mse(out.net);
  Mlp best_net = out.net;
  double prev_val = best_val;
  int rising = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = n_train - 1; i > 0; --i) {
      std::size_t j = rng.next_u64() % (i + 1);
      std::swap(order[i], order[j]);
    }
    for (std::size_t idx : order) {
      mlp_loss_and_grad(out.net, inputs[idx], scaled[idx], grad);
      out.net.w1 -= cfg.learning_rate * grad.w1;
      out.net.b1 -= cfg.learning_rate * grad.b1;
      out.net.w2 -= cfg.learning_rate * grad.w2;
      out.net.b2 -= cfg.learning_rate * grad.b2;
    }
    double vm = val_mse(out.net);
    if (vm < best_val) {
      best_val = vm;
      best_net = out.net;
    }
    rising = (vm > prev_val) ? rising + 1 : 0;
    prev_val = vm;
    if (n_val > 0 && rising >= cfg.patience) break;
  }

  out.net = best_net;
  return out;
}

ActionDelta greedy_action(const QValueFn& q, const Observation& o) {
  const auto& actions = discretize_actions();
  int best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 27; ++i) {
    double v = q(o, actions[i]);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return actions[best];
}

ActionDelta greedy_action(const QFunction& q, const Observation& o) {
  return greedy_action(
      QValueFn([&](const Observation& obs, const ActionDelta& a) {
        return q.raw_value(obs, a);
      }),
      o);
}

std::vector<QFunction> train_nfq(const TransitionBatch& batch, int iterations,
                                 double gamma, const NfqConfig& cfg,
                                 std::uint64_t seed) {
  std::vector<Transition> rows = batch.flat();
  if (rows.empty()) throw std::invalid_argument("train_nfq: empty batch");

  CounterRng rng(CounterRng::derive(seed, 0));
  for (std::size_t i = rows.size() - 1; i > 0; --i) {
    std::size_t j = rng.next_u64() % (i + 1);
    std::swap(rows[i], rows[j]);
  }

  Eigen::MatrixXd all(rows.size(), 9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    all.row(i) = q_input(rows[i].obs, rows[i].action).transpose();
  }

  QFunction q;
  q.stats = zscore_fit(all);
  q.net = make_mlp(9, 20, rng);
  q.trained = false;

  std::vector<QFunction> snapshots;
  snapshots.reserve(iterations);
  for (int it = 0; it < iterations; ++it) {
    q = nfq_iterate(rows, q, gamma, cfg, rng);
    snapshots.push_back(q);
  }
  return snapshots;
}

double policy_value_on_model(const QFunction& q, const model::SystemModel& m,
                             const std::vector<model::HistoryWindow>& histories,
                             int horizon) {
  if (histories.empty()) {
    throw std::invalid_argument("policy_value_on_model: no histories");
  }
  double total = 0.0;
  for (const auto& hist : histories) {
    model::RolloutState st = model::prime_rollout(m, hist);
    Observation obs = hist.back();
    double sum = 0.0;
    for (int t = 0; t < horizon; ++t) {
      ActionDelta a = greedy_action(q, obs);
      auto [next_obs, r] = model::rollout_step(m, st, a);
      obs = next_obs;
      sum += r;
    }
    total += sum / static_cast<double>(horizon);
  }
  return total / static_cast<double>(histories.size());
}

PolicySelection select_best_policy(const std::vector<double>& estimates) {
  if (estimates.empty()) {
    throw std::invalid_argument("select_best_policy: no estimates");
  }
  PolicySelection sel;
  sel.index = 0;
  sel.value = estimates[0];
  for (std::size_t i = 1; i < estimates.size(); ++i) {
    if (estimates[i] > sel.value) {
      sel.value = estimates[i];
      sel.index = static_cast<int>(i);
    }
  }
  return sel;
}

PolicySelection select_best_policy(
    const std::vector<QFunction>& policies, const model::SystemModel& m,
    const std::vector<model::HistoryWindow>& eval_histories, int horizon) {
  if (policies.empty()) {
    throw std::invalid_argument("select_best_policy: no policies");
  }
  std::vector<double> estimates;
  estimates.reserve(policies.size());
  for (const auto& q : policies) {
    estimates.push_back(policy_value_on_model(q, m, eval_histories, horizon));
  }
  return select_best_policy(estimates);
}

// ---------------------------------------------------------------------------

namespace {

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

void save_policy(const QFunction& q, const std::string& path) {
  nlohmann::json w1 = nlohmann::json::array();
  for (int i = 0; i < q.net.w1.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < q.net.w1.cols(); ++j) row.push_back(q.net.w1(i, j));
    w1.push_back(row);
  }
  nlohmann::json j{{"format", "ib-nfq-policy"},
                   {"version", 1},
                   {"w1", w1},
                   {"b1", vec_json(q.net.b1)},
                   {"w2", vec_json(q.net.w2)},
                   {"b2", q.net.b2},
                   {"input_mean", vec_json(q.stats.mean)},
                   {"input_std", vec_json(q.stats.stddev)},
                   {"q_lo", q.scaling.lo},
                   {"q_hi", q.scaling.hi}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

QFunction load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "ib-nfq-policy") {
    throw std::runtime_error("not an NFQ policy file: " + path);
  }
  QFunction q;
  const auto& w1 = j.at("w1");
  auto rows = static_cast<int>(w1.size());
  auto cols = rows > 0 ? static_cast<int>(w1[0].size()) : 0;
  q.net.w1.resize(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) q.net.w1(i, c) = w1[i][c].get<double>();
  q.net.b1 = vec_from(j.at("b1"));
  q.net.w2 = vec_from(j.at("w2"));
  q.net.b2 = j.at("b2").get<double>();
  q.stats.mean = vec_from(j.at("input_mean"));
  q.stats.stddev = vec_from(j.at("input_std"));
  q.scaling.lo = j.at("q_lo").get<double>();
  q.scaling.hi = j.at("q_hi").get<double>();
  q.trained = true;
  return q;
}

}  // namespace ib::nfq
