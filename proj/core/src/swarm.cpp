#include "ib/swarm.hpp"

#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

namespace ib::swarm {

Box Box::uniform(int dim, double lo, double hi) {
  Box b;
  b.lo = Eigen::VectorXd::Constant(dim, lo);
  b.hi = Eigen::VectorXd::Constant(dim, hi);
  return b;
}

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& x, const Box& bounds) {
  return x.cwiseMax(bounds.lo).cwiseMin(bounds.hi);
}

void update_particle(Particle& p, const Eigen::VectorXd& global_best,
                     const Box& bounds, const SwarmConfig& config,
                     CounterRng& rng) {
  const auto dim = p.position.size();
  Eigen::VectorXd width = bounds.hi - bounds.lo;
  for (Eigen::Index i = 0; i < dim; ++i) {
    double r1 = rng.u01();
    double r2 = rng.u01();
    double v = config.inertia * p.velocity[i] +
               config.cognitive * r1 * (p.best_position[i] - p.position[i]) +
               config.social * r2 * (global_best[i] - p.position[i]);
    double cap = config.velocity_cap * width[i];
    if (v > cap) v = cap;
    if (v < -cap) v = -cap;
    p.velocity[i] = v;
  }
  p.position = clamp_to_box(p.position + p.velocity, bounds);
}

namespace {

// Evaluates fitness for all particles into `out`, chunked by index so the
// result does not depend on thread count.
void evaluate_all(const FitnessFunction& fitness,
                  const std::vector<Particle>& particles, int n_threads,
                  std::vector<double>& out) {
  const std::size_t n = particles.size();
  out.resize(n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fitness(particles[i].position);
    return;
  }
  std::vector<std::thread> workers;
  std::size_t chunk = (n + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      for (std::size_t i = begin; i < end; ++i)
        out[i] = fitness(particles[i].position);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace

SwarmResult pso_maximize(const FitnessFunction& fitness, int dim,
                         const Box& bounds, const SwarmConfig& config,
                         std::uint64_t seed,
                         const std::vector<Eigen::VectorXd>* initial_positions) {
  if (dim < 1) throw std::invalid_argument("pso_maximize: dim must be >= 1");
  if (bounds.lo.size() != dim || bounds.hi.size() != dim ||
      !((bounds.hi - bounds.lo).array() > 0.0).all()) {
    throw std::invalid_argument("pso_maximize: empty or mismatched bounds");
  }
  if (config.n_particles < 2) {
    throw std::invalid_argument("pso_maximize: need at least 2 particles");
  }

  Eigen::VectorXd width = bounds.hi - bounds.lo;
  std::vector<Particle> particles(config.n_particles);
  std::vector<CounterRng> streams;
  streams.reserve(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    streams.emplace_back(CounterRng::derive(seed, i));
    Particle& p = particles[i];
    p.position.resize(dim);
    p.velocity.resize(dim);
    for (int d = 0; d < dim; ++d) {
      p.position[d] = streams[i].uniform(bounds.lo[d], bounds.hi[d]);
      p.velocity[d] = streams[i].uniform(-config.init_velocity * width[d],
                                         config.init_velocity * width[d]);
    }
    if (initial_positions && i < initial_positions->size()) {
      p.position = clamp_to_box((*initial_positions)[i], bounds);
    }
    p.best_position = p.position;
    p.best_fitness = -std::numeric_limits<double>::infinity();
  }

  Eigen::VectorXd global_best;
  double global_best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<double> fits;

  for (int iter = 0; iter <= config.n_iterations; ++iter) {
    if (iter > 0) {
      for (std::size_t i = 0; i < particles.size(); ++i) {
        update_particle(particles[i], global_best, bounds, config, streams[i]);
      }
    }
    evaluate_all(fitness, particles, config.n_threads, fits);
    // Strict > keeps the earlier-evaluated best on ties.
    for (std::size_t i = 0; i < particles.size(); ++i) {
      if (fits[i] > particles[i].best_fitness) {
        particles[i].best_fitness = fits[i];
        particles[i].best_position = particles[i].position;
      }
      if (fits[i] > global_best_fitness) {
        global_best_fitness = fits[i];
        global_best = particles[i].position;
      }
    }
  }

  return SwarmResult{global_best, global_best_fitness};
}

}  // namespace ib::swarm
