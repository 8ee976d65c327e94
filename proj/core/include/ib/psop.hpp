#ifndef IB_PSOP_HPP
#define IB_PSOP_HPP

#include <cstdint>

#include "ib/model.hpp"
#include "ib/swarm.hpp"

namespace ib::psop {

struct PsopConfig {
  int horizon = 50;          // planning horizon T
  double terminal_weight = 0.25;  // q: weight of the last accounted reward
  swarm::SwarmConfig swarm;
  bool warm_start = false;  // shift previous plan by one step, zero-fill tail
};

// gamma = q^(1/(T-1)); T = 1 returns 1 by convention.
double gamma_from_q(double q, int horizon);

struct Plan {
  Eigen::VectorXd actions;  // flattened, length 3T, components in [-1,1]
  double estimated_return = 0.0;
};

// Swarm search over action sequences rated by model rollouts.
Plan plan(const model::SystemModel& m, const model::HistoryWindow& hist,
          const PsopConfig& cfg, std::uint64_t seed);

// First action of the best plan; replans from scratch at every query.
ActionDelta act(const model::SystemModel& m, const model::HistoryWindow& hist,
                const PsopConfig& cfg, std::uint64_t seed);

// Receding-horizon policy with optional warm starting between queries.
class Planner {
 public:
  Planner(const model::SystemModel& m, PsopConfig cfg, std::uint64_t seed)
      : model_(&m), cfg_(std::move(cfg)), seed_(seed) {}

  // Planning seed is derived from (seed, query index) so closed-loop runs
  // replay exactly.
  ActionDelta act(const model::HistoryWindow& hist);

  void reset() {
    query_ = 0;
    have_previous_ = false;
  }

 private:
  const model::SystemModel* model_;
  PsopConfig cfg_;
  std::uint64_t seed_;
  std::uint64_t query_ = 0;
  bool have_previous_ = false;
  Eigen::VectorXd previous_plan_;
};

}  // namespace ib::psop

#endif  // IB_PSOP_HPP
