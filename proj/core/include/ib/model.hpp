#ifndef IB_MODEL_HPP
#define IB_MODEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ib/batch.hpp"
#include "ib/env.hpp"

namespace ib::model {

enum class Target { kConsumption, kFatigue };

// Whether a predictor receives its own target variable's history as input.
enum class InputMode { kNoSelfInput, kSelfInput };

// Ordered observations (o_{t-H},...,o_t); must cover the larger horizon.
using HistoryWindow = std::vector<Observation>;

// Single-layer recurrent predictor: h_k = tanh(W_in x_k + W_rec h_{k-1} + b),
// y_k = w_out . h_k + b_out, trained on normalized inputs and targets.
//
// The per-step input x_k is built from the steerings *after* the step's
// action, the set point, and (in self-input mode) the target variable's value
// before the step; the output predicts the target after the step.
struct Predictor {
  Target target = Target::kConsumption;
  InputMode mode = InputMode::kNoSelfInput;
  int horizon = 30;  // past unroll length H
  int hidden_dim = 30;

  Eigen::MatrixXd w_in;   // hidden_dim x input_dim
  Eigen::MatrixXd w_rec;  // hidden_dim x hidden_dim
  Eigen::VectorXd b_h;    // hidden_dim
  Eigen::VectorXd w_out;  // hidden_dim
  double b_out = 0.0;

  Eigen::VectorXd in_mean, in_std;  // per input channel
  double target_mean = 0.0, target_std = 1.0;

  int input_dim() const { return mode == InputMode::kSelfInput ? 5 : 4; }

  // Raw (pre-normalization) input vector for one step.
  Eigen::VectorXd raw_input(const Steerings& s, double set_point,
                            double self_value) const;
};

struct PredictorState {
  Eigen::VectorXd h;  // hidden state, zero before any input
};

PredictorState initial_state(const Predictor& p);

// Consumes one input, returns the denormalized prediction.
double predictor_step(const Predictor& p, PredictorState& state,
                      const Eigen::VectorXd& raw_input);

// m = (m_c, m_f); both trained on the same dataset split convention.
struct SystemModel {
  Predictor consumption;  // H=30, no self input
  Predictor fatigue;      // H=10, self input
};

// Hash of all weights and statistics; identifies the model a policy was
// trained against.
std::uint64_t weights_hash(const SystemModel& m);

// One training window: H past transitions followed by future_steps future
// transitions. steerings[k] are the steerings after step k's action;
// self_true[k] is the target variable before step k; targets[k] is the raw
// target after step k. In the future branch (k > past_steps) the self input
// is the previous prediction, fed back.
struct TrainingWindow {
  std::vector<Steerings> steerings;
  double set_point = 0.0;
  std::vector<double> self_true;
  std::vector<double> targets;
  int past_steps = 0;
};

struct PredictorGrad {
  Eigen::MatrixXd w_in, w_rec;
  Eigen::VectorXd b_h, w_out;
  double b_out = 0.0;
};

// Sum of squared normalized-target errors over the future branch.
double window_loss(const Predictor& p, const TrainingWindow& w);

// Same loss; accumulates BPTT gradients (including the fed-back self-input
// path) into `grad`, which must be zero-initialized to the right shapes.
double window_loss_and_grad(const Predictor& p, const TrainingWindow& w,
                            PredictorGrad& grad);

struct ModelTrainConfig {
  double train_fraction = 0.7;  // per-episode split, rest is validation
  int restarts = 8;
  int max_epochs = 2000;
  int patience = 50;  // epochs without validation improvement
  int future_steps = 50;
  int windows_per_episode = 4;  // training windows sampled per episode
  int n_threads = 1;
};

// Trains `restarts` predictors from distinct initializations and returns the
// one with the lowest validation MAE. Throws if no restart beats the
// constant-mean baseline on validation.
Predictor train_predictor(const TransitionBatch& data, Target target,
                          const ModelTrainConfig& cfg, std::uint64_t seed);

SystemModel train_system_model(const TransitionBatch& data,
                               const ModelTrainConfig& cfg, std::uint64_t seed);

// Closed-loop rollout cursor over a SystemModel. Hidden states are exposed:
// they are the policy network's input.
struct RolloutState {
  PredictorState c_state, f_state;
  Steerings steerings;
  double set_point = 0.0;
  double last_c = 0.0;
  double last_f = 0.0;  // fed back as m_f's self input
};

// Consumes the history window (the last H_c / H_f transitions of `hist`).
RolloutState prime_rollout(const SystemModel& m, const HistoryWindow& hist);

// One model step: steerings via apply_action, c/f from the predictors,
// reward from the reward function. Predictions are fed back unclamped; the
// emitted observation clamps them at zero.
std::pair<Observation, double> rollout_step(const SystemModel& m,
                                            RolloutState& state,
                                            const ActionDelta& a);

std::pair<Observation, double> predict_step(const SystemModel& m,
                                            const HistoryWindow& hist,
                                            const ActionDelta& a);

// Discounted return of an action sequence (flattened, length 3T) rolled out
// from an already-primed state.
double rollout_return_primed(const SystemModel& m, RolloutState state,
                             const Eigen::VectorXd& action_sequence,
                             double gamma);

double rollout_return(const SystemModel& m, const HistoryWindow& hist,
                      const Eigen::VectorXd& action_sequence, double gamma);

// Advances a rollout state with true data instead of model predictions
// (model running alongside the real system).
void observe_step(const SystemModel& m, RolloutState& state,
                  const Observation& prev, const Observation& next);

struct ErrorProfile {
  Eigen::VectorXd c_mae;  // mean absolute error at rollout step k (1-based)
  Eigen::VectorXd f_mae;
};

// Closed-loop rollout error against held-out episodes, feeding true actions
// and the model's own predictions forward.
ErrorProfile rollout_error_profile(const SystemModel& m,
                                   const std::vector<Episode>& episodes,
                                   int steps);

void save_model(const SystemModel& m, const std::string& path);
SystemModel load_model(const std::string& path);

}  // namespace ib::model

#endif  // IB_MODEL_HPP
