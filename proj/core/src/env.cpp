#include "ib/env.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ib {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double clamp01_100(double x) {
  if (x < 0.0) return 0.0;
  if (x > 100.0) return 100.0;
  return x;
}

double sq(double x) { return x * x; }

void append_u64_hex(std::string& out, std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  out += buf;
}

std::uint64_t parse_u64_hex(const std::string& s, size_t pos) {
  if (pos + 16 > s.size()) throw std::invalid_argument("snapshot blob truncated");
  std::uint64_t x = 0;
  for (size_t i = 0; i < 16; ++i) {
    char c = s[pos + i];
    x <<= 4;
    if (c >= '0' && c <= '9')
      x |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      x |= static_cast<std::uint64_t>(c - 'a' + 10);
    else
      throw std::invalid_argument("snapshot blob has non-hex character");
  }
  return x;
}

}  // namespace

ActionDelta::ActionDelta(double dv, double dg, double dh)
    : dv_(dv), dg_(dg), dh_(dh) {
  if (!(dv >= -1.0 && dv <= 1.0 && dg >= -1.0 && dg <= 1.0 && dh >= -1.0 &&
        dh <= 1.0)) {
    throw std::invalid_argument("action delta component outside [-1,1]");
  }
}

Steerings apply_action(const Steerings& s, const ActionDelta& a) {
  Steerings out;
  out.v = clamp01_100(s.v + kVelocityScale * a.dv());
  out.g = clamp01_100(s.g + kGainScale * a.dg());
  out.h = clamp01_100(s.h + kShiftScale * a.dh());
  return out;
}

double target_velocity(double set_point) { return 0.11 * set_point + 27.0; }

double target_shift(double phase) { return 70.0 + 20.0 * std::sin(phase); }

EnvState reset(double set_point, std::uint64_t seed, double noise_scale) {
  if (!(set_point >= 0.0 && set_point <= 100.0)) {
    throw std::invalid_argument("set point outside [0,100]");
  }
  EnvState s;
  s.steerings = Steerings{50.0, 50.0, 50.0};
  s.set_point = set_point;
  s.phase = 0.0;
  s.fatigue_latent = 0.0;
  s.rng_key = CounterRng::derive(seed, 0);
  s.rng_counter = 0;
  s.time = 0;
  s.noise_scale = noise_scale;
  // Initial consumption/fatigue: noise-free evaluation at the initial state.
  double p = set_point;
  s.consumption = 0.01 * p *
                  (1.0 + 0.005 * sq(50.0 - target_velocity(p)) +
                   0.005 * sq(50.0 - kTargetGain) +
                   0.002 * sq(50.0 - target_shift(0.0)));
  s.fatigue = 0.0;
  return s;
}

std::tuple<EnvState, Observation, double> step(const EnvState& state,
                                               const ActionDelta& a) {
  EnvState next = state;
  next.steerings = apply_action(state.steerings, a);
  next.phase = std::fmod(state.phase + kPhaseStep, kTwoPi);

  CounterRng rng(state.rng_key, state.rng_counter);
  double eps = rng.normal();
  double u = rng.u01();
  next.rng_counter = rng.counter();

  double p = state.set_point;
  const Steerings& s = next.steerings;
  double base = 0.01 * p *
                (1.0 + 0.005 * sq(s.v - target_velocity(p)) +
                 0.005 * sq(s.g - kTargetGain) +
                 0.002 * sq(s.h - target_shift(next.phase)));
  double sigma = 0.05 * (p / 100.0) * (1.0 + s.g / 100.0);
  double c = base + state.noise_scale * sigma * eps;
  if (c < 0.0) c = 0.0;

  double drive =
      std::max(0.0, s.v - 60.0) * std::max(0.0, s.g - 60.0) / 1600.0;
  next.fatigue_latent = 0.9 * state.fatigue_latent + 0.1 * drive;
  double f = next.fatigue_latent * (1.0 + 0.5 * state.noise_scale * u);

  next.consumption = c;
  next.fatigue = f;
  next.time = state.time + 1;

  double r = compute_reward(c, f);
  return {next, observe(next), r};
}

Observation observe(const EnvState& state) {
  Observation o;
  o.v = state.steerings.v;
  o.g = state.steerings.g;
  o.h = state.steerings.h;
  o.p = state.set_point;
  o.c = state.consumption;
  o.f = state.fatigue;
  return o;
}

SeedSnapshot snapshot(const EnvState& state) {
  SeedSnapshot snap;
  snap.rng_key = state.rng_key;
  snap.rng_counter = state.rng_counter;
  snap.phase = state.phase;
  snap.fatigue_latent = state.fatigue_latent;
  return snap;
}

EnvState restore(const EnvState& state, const SeedSnapshot& snap) {
  EnvState out = state;
  out.rng_key = snap.rng_key;
  out.rng_counter = snap.rng_counter;
  out.phase = snap.phase;
  out.fatigue_latent = snap.fatigue_latent;
  return out;
}

// Layout: "IBSNAP1:" followed by four 16-digit lowercase hex words, in order
// rng_key, rng_counter, phase bits, fatigue_latent bits (IEEE-754 doubles).
std::string SeedSnapshot::to_text() const {
  std::string out = "IBSNAP1:";
  append_u64_hex(out, rng_key);
  append_u64_hex(out, rng_counter);
  append_u64_hex(out, std::bit_cast<std::uint64_t>(phase));
  append_u64_hex(out, std::bit_cast<std::uint64_t>(fatigue_latent));
  return out;
}

SeedSnapshot SeedSnapshot::from_text(const std::string& blob) {
  const std::string magic = "IBSNAP1:";
  if (blob.rfind(magic, 0) != 0) {
    throw std::invalid_argument("snapshot blob missing IBSNAP1 header");
  }
  if (blob.size() != magic.size() + 64) {
    throw std::invalid_argument("snapshot blob has wrong length");
  }
  SeedSnapshot snap;
  size_t pos = magic.size();
  snap.rng_key = parse_u64_hex(blob, pos);
  snap.rng_counter = parse_u64_hex(blob, pos + 16);
  snap.phase = std::bit_cast<double>(parse_u64_hex(blob, pos + 32));
  snap.fatigue_latent = std::bit_cast<double>(parse_u64_hex(blob, pos + 48));
  return snap;
}

}  // namespace ib
