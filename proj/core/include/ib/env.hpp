#ifndef IB_ENV_HPP
#define IB_ENV_HPP

#include <cstdint>
#include <string>
#include <tuple>

#include "ib/rng.hpp"

namespace ib {

// The three controllable variables, each bounded to [0,100].
struct Steerings {
  double v = 50.0;  // velocity
  double g = 50.0;  // gain
  double h = 50.0;  // shift
};

// Proposed steering changes, each component in [-1,1].
class ActionDelta {
 public:
  ActionDelta() = default;
  ActionDelta(double dv, double dg, double dh);  // throws on out-of-range

  double dv() const { return dv_; }
  double dg() const { return dg_; }
  double dh() const { return dh_; }

 private:
  double dv_ = 0.0, dg_ = 0.0, dh_ = 0.0;
};

// The observable slice of the hidden Markov state.
struct Observation {
  double v = 0.0;
  double g = 0.0;
  double h = 0.0;
  double p = 0.0;  // set point
  double c = 0.0;  // consumption
  double f = 0.0;  // fatigue
};

// Full hidden state of the surrogate benchmark.
struct EnvState {
  Steerings steerings;
  double set_point = 50.0;
  double phase = 0.0;           // hidden phase angle, wraps mod 2*pi
  double fatigue_latent = 0.0;  // delayed-effect accumulator
  double consumption = 0.0;
  double fatigue = 0.0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  std::uint64_t time = 0;
  double noise_scale = 1.0;  // 0 disables stochastic effects
};

// Serializable copy of the stochastic and hidden parts of an EnvState.
struct SeedSnapshot {
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  double phase = 0.0;
  double fatigue_latent = 0.0;

  std::string to_text() const;
  static SeedSnapshot from_text(const std::string& blob);  // throws on bad blob
};

inline constexpr double kVelocityScale = 1.0;
inline constexpr double kGainScale = 10.0;
inline constexpr double kShiftScale = 5.75;

// Steering update: scale, add, clamp to [0,100].
Steerings apply_action(const Steerings& s, const ActionDelta& a);

inline double compute_reward(double consumption, double fatigue) {
  return -consumption - 3.0 * fatigue;
}

// Surrogate dynamics targets (noise-free optimum placement).
double target_velocity(double set_point);  // 0.11*p + 27
inline constexpr double kTargetGain = 40.0;
double target_shift(double phase);  // 70 + 20*sin(phase)
inline constexpr double kPhaseStep = 6.283185307179586476925286766559 / 24.0;

EnvState reset(double set_point, std::uint64_t seed, double noise_scale = 1.0);

std::tuple<EnvState, Observation, double> step(const EnvState& state,
                                               const ActionDelta& a);

Observation observe(const EnvState& state);

SeedSnapshot snapshot(const EnvState& state);
EnvState restore(const EnvState& state, const SeedSnapshot& snap);

}  // namespace ib

#endif  // IB_ENV_HPP
