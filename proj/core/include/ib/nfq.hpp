#ifndef IB_NFQ_HPP
#define IB_NFQ_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ib/batch.hpp"
#include "ib/model.hpp"
#include "ib/rng.hpp"

namespace ib::nfq {

// The 27 triples {-1,0,1}^3 in lexicographic order, dv slowest, dh fastest.
std::array<ActionDelta, 27>& discretize_actions();

struct NormalizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // guarded below by 1e-8
};

NormalizationStats zscore_fit(const Eigen::MatrixXd& rows);
Eigen::VectorXd zscore_apply(const NormalizationStats& stats,
                             const Eigen::VectorXd& x);

// Affine map of raw targets [lo, hi] onto [0.1, 0.9]; degenerate ranges map
// everything to 0.5.
struct QScaling {
  double lo = 0.0;
  double hi = 1.0;
};

QScaling fit_q_scaling(const Eigen::VectorXd& targets);
double scale_q(const QScaling& s, double raw);
double unscale_q(const QScaling& s, double scaled);

// [9-20-1] feed-forward MLP, logistic activation on every neuron.
struct Mlp {
  Eigen::MatrixXd w1;  // 20 x 9
  Eigen::VectorXd b1;  // 20
  Eigen::VectorXd w2;  // 20
  double b2 = 0.0;

  double forward(const Eigen::VectorXd& x) const;  // output in (0,1)
};

Mlp make_mlp(int inputs, int hidden, CounterRng& rng);  // weights U[-0.1,0.1]

struct MlpGrad {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

// Squared-error loss against `target` plus its gradient.
double mlp_loss_and_grad(const Mlp& net, const Eigen::VectorXd& x,
                         double target, MlpGrad& grad);

struct QFunction {
  Mlp net;
  NormalizationStats stats;
  QScaling scaling;
  bool trained = false;  // an untrained Q evaluates to raw 0 everywhere

  // Unscaled Q(o, a): network output mapped back through the scaling.
  double raw_value(const Observation& o, const ActionDelta& a) const;
};

Eigen::VectorXd q_input(const Observation& o, const ActionDelta& a);  // dim 9

struct NfqConfig {
  int max_epochs = 300;
  int patience = 10;  // consecutive epochs of rising validation error
  double learning_rate = 0.1;
  double val_fraction = 0.1;  // tail of the (already permuted) rows
};

// One fitted-Q iteration: targets r + gamma * max_a' Q(o',a') built in
// unscaled space, rescaled, then the network is trained further by
// per-sample SGD with a seeded shuffle. Rows must already be permuted; the
// last val_fraction of them is the validation split. Throws on non-finite
// targets.
QFunction nfq_iterate(const std::vector<Transition>& rows, const QFunction& q,
                      double gamma, const NfqConfig& cfg, CounterRng& rng);

// Argmax over the 27 discrete actions; ties broken by lowest index.
ActionDelta greedy_action(const QFunction& q, const Observation& o);

using QValueFn = std::function<double(const Observation&, const ActionDelta&)>;
ActionDelta greedy_action(const QValueFn& q, const Observation& o);

// Runs `iterations` fitted-Q iterations from a fresh network and returns the
// Q snapshot after every iteration.
std::vector<QFunction> train_nfq(const TransitionBatch& batch, int iterations,
                                 double gamma, const NfqConfig& cfg,
                                 std::uint64_t seed);

// Mean per-step model-predicted reward of the greedy policy, rolled out
// closed-loop from each history.
double policy_value_on_model(const QFunction& q, const model::SystemModel& m,
                             const std::vector<model::HistoryWindow>& histories,
                             int horizon);

struct PolicySelection {
  int index = 0;
  double value = 0.0;
};

// Argmax of the per-policy estimates; earliest index wins ties.
PolicySelection select_best_policy(const std::vector<double>& estimates);

// Argmax of policy_value_on_model across snapshots; earliest iteration wins
// ties.
PolicySelection select_best_policy(
    const std::vector<QFunction>& policies, const model::SystemModel& m,
    const std::vector<model::HistoryWindow>& eval_histories, int horizon = 50);

void save_policy(const QFunction& q, const std::string& path);
QFunction load_policy(const std::string& path);

}  // namespace ib::nfq

#endif  // IB_NFQ_HPP
