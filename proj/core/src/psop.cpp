#include "ib/psop.hpp"

#include <cmath>
#include <stdexcept>

namespace ib::psop {

double gamma_from_q(double q, int horizon) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw std::invalid_argument("gamma_from_q: q must be in [0,1]");
  }
  if (horizon < 1) throw std::invalid_argument("gamma_from_q: T must be >= 1");
  if (horizon == 1) return 1.0;
  return std::pow(q, 1.0 / static_cast<double>(horizon - 1));
}

namespace {

Plan plan_impl(const model::SystemModel& m, const model::HistoryWindow& hist,
               const PsopConfig& cfg, std::uint64_t seed,
               const Eigen::VectorXd* warm) {
  const int dim = 3 * cfg.horizon;
  const double gamma = gamma_from_q(cfg.terminal_weight, cfg.horizon);
  const model::RolloutState primed = model::prime_rollout(m, hist);

  swarm::FitnessFunction fitness = [&](const Eigen::VectorXd& x) {
    return model::rollout_return_primed(m, primed, x, gamma);
  };

  swarm::Box box = swarm::Box::uniform(dim, -1.0, 1.0);
  std::vector<Eigen::VectorXd> seeds;
  const std::vector<Eigen::VectorXd>* seed_ptr = nullptr;
  if (warm) {
    seeds.push_back(*warm);
    seed_ptr = &seeds;
  }
  swarm::SwarmResult best =
      swarm::pso_maximize(fitness, dim, box, cfg.swarm, seed, seed_ptr);
  return Plan{best.best_position, best.best_fitness};
}

}  // namespace

Plan plan(const model::SystemModel& m, const model::HistoryWindow& hist,
          const PsopConfig& cfg, std::uint64_t seed) {
  return plan_impl(m, hist, cfg, seed, nullptr);
}

ActionDelta act(const model::SystemModel& m, const model::HistoryWindow& hist,
                const PsopConfig& cfg, std::uint64_t seed) {
  Plan p = plan(m, hist, cfg, seed);
  return ActionDelta(p.actions[0], p.actions[1], p.actions[2]);
}

ActionDelta Planner::act(const model::HistoryWindow& hist) {
  std::uint64_t plan_seed = CounterRng::derive(seed_, query_);
  ++query_;

  const Eigen::VectorXd* warm = nullptr;
  Eigen::VectorXd shifted;
  if (cfg_.warm_start && have_previous_) {
    shifted = Eigen::VectorXd::Zero(previous_plan_.size());
    shifted.head(previous_plan_.size() - 3) = previous_plan_.tail(
        previous_plan_.size() - 3);
    warm = &shifted;
  }
  Plan p = plan_impl(*model_, hist, cfg_, plan_seed, warm);
  previous_plan_ = p.actions;
  have_previous_ = true;
  return ActionDelta(p.actions[0], p.actions[1], p.actions[2]);
}

}  // namespace ib::psop
