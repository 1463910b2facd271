#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace neuroisp {

enum class Errc {
  malformed_record,
  out_of_range,
  empty_stream,
  dimension_mismatch,
  non_finite_input,
  shape_mismatch,
  non_finite_loss,
  framing_error,
  all_pixels_excluded,
  degenerate_channel,
  bad_magic,
  depth_mismatch,
  missing_sidecar,
  schema_violation,
  io_failure,
  no_overlap,
  invalid_directive,
  usage_error,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

// Rounds ties toward +inf (round-half-up), the convention used by every
// fixed-point stage.
inline double round_half_up(double v) { return std::floor(v + 0.5); }

inline std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

// round_half_up(num/den) in exact integer arithmetic; den > 0.
inline std::int64_t div_round_half_up(std::int64_t num, std::int64_t den) {
  return floor_div(2 * num + den, 2 * den);
}

template <typename T>
inline T clamp_to(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  if (v < lo) v = lo;
  if (v > hi) v = hi;
  return static_cast<T>(v);
}

// Deterministic RNG: splitmix64-seeded xoshiro256** with fixed mappings to
// double/normal so streams are bit-identical across platforms and toolchains
// (the std <random> distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& word : s_) {
      z += 0x9e3779b97f4a7c15ULL;
      std::uint64_t x = z;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      word = x ^ (x >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per pair, caches the second.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    spare_ = mag * std::sin(two_pi * u2);
    has_spare_ = true;
    return mag * std::cos(two_pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

// Level comes from NEUROISP_LOG (error|warn|info|debug), default warn.
LogLevel log_level();
void log_msg(LogLevel level, const std::string& msg);

}  // namespace neuroisp
