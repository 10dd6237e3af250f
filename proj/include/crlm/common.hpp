#pragma once

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>

namespace crlm {

inline constexpr const char* kToolVersion = "0.1.0";

// Input/contract violations map to exit code 2 at the CLI; solver and
// floating-point failures map to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

// CRLM_LOG=quiet|info|debug (stderr verbosity; the only environment knob).
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("CRLM_LOG");
    if (env == nullptr) return LogLevel::Info;
    const std::string v(env);
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() != LogLevel::Quiet) std::cerr << "[crlm] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() == LogLevel::Debug) std::cerr << "[crlm] " << msg << "\n";
}

// ---- small numeric helpers shared across modules ----

inline double vec_mean(std::span<const double> v) {
  if (v.empty()) throw DataError("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_variance(std::span<const double> v) {
  const double m = vec_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

inline double population_std(std::span<const double> v) {
  return std::sqrt(population_variance(v));
}

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = vec_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Linear-interpolation percentile over an already sorted sample, q in [0,100].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DataError("percentile of empty vector");
  if (q <= 0.0) return sorted.front();
  if (q >= 100.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = static_cast<size_t>(std::ceil(h));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double median_sorted(std::span<const double> sorted) {
  return percentile_sorted(sorted, 50.0);
}

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// 2 * (1 - Phi(|z|))
inline double two_sided_normal_p(double z) {
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

// Survival function of chi-square with 1 degree of freedom.
inline double chi2_1df_sf(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

}  // namespace crlm
