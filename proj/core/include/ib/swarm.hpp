#ifndef IB_SWARM_HPP
#define IB_SWARM_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "ib/rng.hpp"

namespace ib::swarm {

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static Box uniform(int dim, double lo, double hi);
};

// Maximized; higher is better. Must be safe to evaluate concurrently.
using FitnessFunction = std::function<double(const Eigen::VectorXd&)>;

struct SwarmConfig {
  int n_particles = 100;
  int n_iterations = 100;
  // Constricted PSO defaults; the swarm is fully connected (star topology),
  // every particle sees the global best.
  double inertia = 0.7298;
  double cognitive = 1.49618;
  double social = 1.49618;
  double velocity_cap = 0.5;    // fraction of box width, per component
  double init_velocity = 0.25;  // initial velocities uniform in +/- this * width
  int n_threads = 1;            // fitness evaluation threads
};

struct Particle {
  Eigen::VectorXd position;
  Eigen::VectorXd velocity;
  Eigen::VectorXd best_position;
  double best_fitness;
};

struct SwarmResult {
  Eigen::VectorXd best_position;
  double best_fitness;
};

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x, const Box& bounds);

// One constricted-PSO velocity/position update with per-component uniform
// draws r1, r2 from `rng`. Velocity capped at velocity_cap * box width,
// position clamped to the box.
void update_particle(Particle& p, const Eigen::VectorXd& global_best,
                     const Box& bounds, const SwarmConfig& config,
                     CounterRng& rng);

// Deterministic given `seed` when the fitness function is deterministic;
// per-particle RNG streams make the result independent of thread count.
// `initial_positions`, if given, overrides the starting positions of the
// first particles (clamped to the box).
SwarmResult pso_maximize(const FitnessFunction& fitness, int dim,
                         const Box& bounds, const SwarmConfig& config,
                         std::uint64_t seed,
                         const std::vector<Eigen::VectorXd>* initial_positions =
                             nullptr);

}  // namespace ib::swarm

#endif  // IB_SWARM_HPP
