#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hymarl {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}
}  // namespace detail

/// Counter-based random stream. Output at index i is a pure function of
/// (key, i), so independently derived streams never interact and a stream can
/// be reproduced from its key alone. Uniform/normal/bernoulli draws are
/// hand-rolled so results do not depend on the standard library vendor.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t key) : key_(key) {}

  static SplitRng from_master(std::uint64_t master, std::string_view stream) {
    return SplitRng(detail::mix64(master ^ detail::fnv1a(stream)));
  }

  /// Derives an independent child stream; does not consume from this one.
  SplitRng split(std::string_view child) const {
    return SplitRng(detail::mix64(key_ ^ detail::fnv1a(child) ^ 0x9E3779B97F4A7C15ull));
  }

  SplitRng split(std::uint64_t child) const {
    return SplitRng(detail::mix64(key_ ^ detail::mix64(child + 0x632BE59BD9B4E019ull)));
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  /// Uniform in [0,1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hymarl
