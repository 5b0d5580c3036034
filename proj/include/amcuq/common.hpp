#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace amcuq {

inline constexpr std::string_view kVersion = "0.3.0";

/// Error classes shared by every module. The C API maps them 1:1 onto
/// amcuq_status codes.
enum class ErrorCode {
  invalid_argument = 1,
  shape_mismatch,
  length_mismatch,
  invalid_grid,
  insufficient_cell,
  corrupt_header,
  version_mismatch,
  truncated_payload,
  io,
  divergence,
  empty_batch,
  config,
  missing_artifact,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

enum class Precision { f32, f64 };

std::string_view to_string(Precision p) noexcept;
Precision parse_precision(std::string_view s);

/// Lower clip bound applied to every probability before a log.
inline constexpr double kProbClip = 1e-12;

/// splitmix64 finalizer; mixes a parent seed with child indices into an
/// independent stream seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(base) ^ a) + b);
}

/// Random stream with platform-independent conversions; std's distribution
/// objects are implementation defined, the engine itself is not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Runs task(i) for i in [0, n) on up to `workers` threads. The first failure
/// by index is rethrown after all tasks finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task);

}  // namespace amcuq
