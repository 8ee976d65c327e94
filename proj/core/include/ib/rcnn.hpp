#ifndef IB_RCNN_HPP
#define IB_RCNN_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ib/batch.hpp"
#include "ib/model.hpp"
#include "ib/rng.hpp"

namespace ib::rcnn {

// Policy network reading the system model's concatenated hidden states
// (30 + 30 by default): two tanh hidden layers of 12 and 6 neurons, sine
// output layer, so actions land in [-1,1] by construction.
struct PolicyNetwork {
  Eigen::MatrixXd w1;  // 12 x input_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // 6 x 12
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;  // 3 x 6
  Eigen::VectorXd b3;

  int input_dim() const { return static_cast<int>(w1.cols()); }
};

PolicyNetwork make_policy(int input_dim, CounterRng& rng, int hidden1 = 12,
                          int hidden2 = 6);

Eigen::Vector3d policy_forward_raw(const PolicyNetwork& net,
                                   const Eigen::VectorXd& model_hidden);
ActionDelta policy_forward(const PolicyNetwork& net,
                           const Eigen::VectorXd& model_hidden);

// Hidden-state vector the policy reads from a rollout cursor.
Eigen::VectorXd policy_input(const model::RolloutState& state);

struct PolicyGrad {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
};

PolicyGrad zero_policy_grad(const PolicyNetwork& net);

// Negative discounted model return of a T-step closed-loop rollout driven by
// the policy. Predictions are fed back unclamped to keep the loss smooth.
double rollout_loss(const model::SystemModel& m, const PolicyNetwork& net,
                    const model::RolloutState& start, int steps, double gamma);

// Same loss; accumulates the gradient with respect to the policy weights
// only, backpropagating through the frozen model (steering clamps pass a
// zero subgradient when active).
double rollout_loss_and_grad(const model::SystemModel& m,
                             const PolicyNetwork& net,
                             const model::RolloutState& start, int steps,
                             double gamma, PolicyGrad& grad);

struct RcnnTrainConfig {
  int rollout_steps = 50;         // T
  double terminal_weight = 0.25;  // q; discount = q^(1/(T-1))
  int epochs = 72;
  int samples_per_epoch = 64;  // online updates per epoch, batch size 1
  double lr_min = 1e-6;        // learning rate log-uniform in [lr_min, lr_max]
  double lr_max = 1e-4;
  int runs = 10;
  std::vector<int> snapshot_epochs;  // empty: 1,2,4,6,10,15,23,34,50,72,...
  int assess_histories = 8;
  int assess_horizon = 50;
};

std::vector<int> default_snapshot_ladder(int max_epochs);

struct RcnnSnapshot {
  int epoch = 0;
  PolicyNetwork policy;
};

struct TrainingRun {
  double learning_rate = 0.0;
  std::vector<RcnnSnapshot> snapshots;
  bool diverged = false;  // loss became non-finite; snapshots end early
};

// One training run with a fixed learning rate, online updates through the
// frozen model. Deterministic given the seed.
TrainingRun train_rcnn_run(const model::SystemModel& m,
                           const TransitionBatch& data,
                           const RcnnTrainConfig& cfg, double learning_rate,
                           std::uint64_t seed);

// Mean per-step model-estimated reward over closed-loop rollouts.
double self_assess(const PolicyNetwork& policy, const model::SystemModel& m,
                   const std::vector<model::HistoryWindow>& histories,
                   int horizon = 50);

// Runs cfg.runs independent trainings with log-uniform learning-rate draws
// and returns the snapshot with the best self-assessment.
PolicyNetwork train_rcnn_policy(const model::SystemModel& m,
                                const TransitionBatch& data,
                                const RcnnTrainConfig& cfg,
                                std::uint64_t seed);

// Policy files carry the companion model's weight hash; loading verifies it.
void save_policy(const PolicyNetwork& net, std::uint64_t model_hash,
                 const std::string& path);
PolicyNetwork load_policy(const std::string& path, std::uint64_t model_hash);

}  // namespace ib::rcnn

#endif  // IB_RCNN_HPP
