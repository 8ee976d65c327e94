#ifndef IB_RNG_HPP
#define IB_RNG_HPP

#include <cmath>
#include <cstdint>

namespace ib {

// Counter-based deterministic generator. Output i is the splitmix64 mix of
// key + (i+1)*GAMMA, so the full generator state is two 64-bit words and a
// snapshot of (key, counter) replays the stream exactly on any platform.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64() {
    ++counter_;
    std::uint64_t z = key_ + counter_ * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Box-Muller, consumes exactly two uniforms per call (no caching, so the
  // draw count per call is fixed and replay stays aligned).
  double normal() {
    double u1 = u01();
    double u2 = u01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

  // Derives an independent stream key from a master seed and a stream index.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    CounterRng r(master ^ 0xD1B54A32D192ED03ULL, stream * 0x2545F4914F6CDD1DULL);
    return r.next_u64();
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace ib

#endif  // IB_RNG_HPP
