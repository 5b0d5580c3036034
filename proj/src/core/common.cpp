#include "amcuq/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>
#include <vector>

namespace amcuq {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::invalid_grid: return "invalid-grid";
    case ErrorCode::insufficient_cell: return "insufficient-cell";
    case ErrorCode::corrupt_header: return "corrupt-header";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::truncated_payload: return "truncated-payload";
    case ErrorCode::io: return "io";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::empty_batch: return "empty-batch";
    case ErrorCode::config: return "config";
    case ErrorCode::missing_artifact: return "missing-artifact";
  }
  return "unknown";
}

std::string_view to_string(Precision p) noexcept { return p == Precision::f32 ? "f32" : "f64"; }

Precision parse_precision(std::string_view s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  fail(ErrorCode::invalid_argument, "unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(n, std::max<std::size_t>(workers, 1));
  if (threads <= 1) {
    run();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(run);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace amcuq
