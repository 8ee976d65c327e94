#ifndef IB_HARNESS_HPP
#define IB_HARNESS_HPP

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ib/batch.hpp"
#include "ib/env.hpp"
#include "ib/model.hpp"
#include "ib/nfq.hpp"
#include "ib/psop.hpp"
#include "ib/rcnn.hpp"
#include "ib/swarm.hpp"

namespace ib::harness {

// ---------------------------------------------------------------------------
// Configuration (single JSON file; CLI flags override individual keys)

struct ExperimentConfig {
  std::uint64_t seed = 1;
  double noise_scale = 1.0;

  // Data generation.
  std::vector<double> set_points{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  int episodes_per_set_point = 10;
  int episode_length = 1000;

  model::ModelTrainConfig model_cfg;
  psop::PsopConfig psop_cfg;

  nfq::NfqConfig nfq_cfg;
  int nfq_iterations = 200;
  int nfq_select_histories = 8;
  int nfq_select_horizon = 50;

  rcnn::RcnnTrainConfig rcnn_cfg;

  // Evaluation.
  std::vector<double> eval_set_points;  // empty: same as set_points
  int eval_runs = 10;
  int eval_episode_length = 1000;
  bool paired_env_seeds = true;  // env seed per (set point, run) shared
                                 // across methods; false draws per-method

  // Oracle.
  int oracle_horizon = 50;
  double oracle_q = 0.25;
  swarm::SwarmConfig oracle_swarm;

  std::string out_dir = "out";
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// ---------------------------------------------------------------------------
// Batch generation

// Uniform-random actions; set_points x episodes_per_set_point episodes of
// episode_length steps each.
TransitionBatch generate_batch(const ExperimentConfig& cfg,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Policies under evaluation

class Policy {
 public:
  virtual ~Policy() = default;
  // Environment steps driven with zero actions before control starts; the
  // observations fill history windows and are excluded from the reported
  // average.
  virtual int warmup_steps() const { return 0; }
  virtual void begin_episode(const std::vector<Observation>& warmup) {}
  virtual ActionDelta act(const Observation& current) = 0;
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  ActionDelta act(const Observation&) override;

 private:
  CounterRng rng_;
};

class NfqPolicy : public Policy {
 public:
  explicit NfqPolicy(nfq::QFunction q) : q_(std::move(q)) {}
  ActionDelta act(const Observation& current) override;

 private:
  nfq::QFunction q_;
};

// The system model runs alongside the environment, consuming true
// observations; the policy reads the model's hidden state.
class RcnnPolicy : public Policy {
 public:
  RcnnPolicy(const model::SystemModel& m, rcnn::PolicyNetwork net)
      : model_(&m), net_(std::move(net)) {}
  int warmup_steps() const override;
  void begin_episode(const std::vector<Observation>& warmup) override;
  ActionDelta act(const Observation& current) override;

 private:
  const model::SystemModel* model_;
  rcnn::PolicyNetwork net_;
  model::RolloutState state_;
  Observation prev_;
  bool first_ = true;
};

class PsopPolicy : public Policy {
 public:
  PsopPolicy(const model::SystemModel& m, const psop::PsopConfig& cfg,
             std::uint64_t seed)
      : model_(&m), planner_(m, cfg, seed) {}
  int warmup_steps() const override;
  void begin_episode(const std::vector<Observation>& warmup) override;
  ActionDelta act(const Observation& current) override;

 private:
  const model::SystemModel* model_;
  psop::Planner planner_;
  std::deque<Observation> window_;
  bool first_ = true;
};

// ---------------------------------------------------------------------------
// Evaluation and result tables

// Rows are set points; columns run indices plus mean; optional MAX column.
struct ResultTable {
  std::vector<double> set_points;
  std::vector<std::vector<double>> values;  // [set point][run]
  std::vector<double> max_values;           // empty when absent

  std::vector<double> row_means() const;
  double overall_mean() const;

  void write_csv(const std::string& path) const;
  static ResultTable read_csv(const std::string& path);

  // Appendix-style text table, "SetPoint (MAX)" first column when the MAX
  // values are present.
  std::string pretty() const;

  // Long format: set_point,run,value rows.
  void write_long_csv(const std::string& path) const;
};

struct EpisodeResult {
  double average_reward = 0.0;  // over the controlled steps only
  Episode trajectory;           // includes the warmup prefix
};

using PolicyFactory =
    std::function<std::unique_ptr<Policy>(int run, double set_point)>;

EpisodeResult evaluate_episode(double set_point, std::uint64_t env_seed,
                               double noise_scale, int steps, Policy& policy);

// Evaluates a policy per (set point, run); env seeds derive from
// (eval_seed, set point index, run) — with paired seeds the run index is
// dropped, so methods face identical environments.
ResultTable evaluate_policy(const ExperimentConfig& cfg,
                            const PolicyFactory& factory,
                            TransitionBatch* trajectories = nullptr);

// ---------------------------------------------------------------------------
// Oracle

// Receding-horizon swarm planning against the true environment with the
// future randomness frozen through state copies; returns the average reward
// per step.
double max_reward_oracle(double set_point, std::uint64_t env_seed,
                         double noise_scale, int episode_length,
                         const ExperimentConfig& cfg, std::uint64_t plan_seed);

// ---------------------------------------------------------------------------
// Pipeline

// Runs the full pipeline for one method ("random", "psop", "nfq", "rcnn"):
// batch generation, model and policy training as the method requires,
// then evaluation. Writes results_<method>.csv and trajectories_<method>.csv
// under cfg.out_dir. Fully determined by cfg.seed.
ResultTable run_experiment(const ExperimentConfig& cfg,
                           const std::string& method);

}  // namespace ib::harness

#endif  // IB_HARNESS_HPP
