#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/components.hpp"
#include "crlm/volume.hpp"

namespace crlm::radiomics {

// First-order + shape feature subset. Statistical features are computed
// on the raw region intensities after mu +/- 3*sigma outlier exclusion;
// entropy and uniformity are computed on the z-scored, x100-scaled values
// discretized with a fixed bin width, so histogram features are
// comparable across regions regardless of raw intensity scale.

inline const std::vector<std::string>& first_order_feature_names() {
  static const std::vector<std::string> names = {
      "mean",        "median",     "minimum",    "maximum",
      "range",       "variance",   "stddev",     "skewness",
      "kurtosis",    "energy",     "total_energy", "entropy",
      "uniformity",  "p10",        "p90",        "iqr",
      "mad",         "rms",        "volume_mm3", "longest_diameter_mm"};
  return names;
}

struct FirstOrderOptions {
  double bin_width = 5.0;
  double scale = 100.0;
  double outlier_sigmas = 3.0;
};

// Returns the 20-entry feature vector, or nullopt if outlier exclusion
// emptied the region (the caller drops the tumor).
inline std::optional<std::vector<double>> extract_first_order(
    const Volume3D& vol, const Component& comp,
    const FirstOrderOptions& opts = {}) {
  if (comp.voxels.empty()) throw DataError("empty component");

  std::vector<double> vals;
  vals.reserve(comp.voxels.size());
  for (size_t lin : comp.voxels)
    vals.push_back(static_cast<double>(vol.data()[lin]));

  // outlier exclusion with stats of the full region
  {
    const double mu = vec_mean(vals);
    const double sd = population_std(vals);
    const double lo = mu - opts.outlier_sigmas * sd;
    const double hi = mu + opts.outlier_sigmas * sd;
    std::vector<double> kept;
    kept.reserve(vals.size());
    for (double v : vals)
      if (v >= lo && v <= hi) kept.push_back(v);
    vals.swap(kept);
  }
  if (vals.empty()) return std::nullopt;

  const double n = static_cast<double>(vals.size());
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());

  const double mean = vec_mean(vals);
  const double median = median_sorted(sorted);
  const double minimum = sorted.front();
  const double maximum = sorted.back();
  const double range = maximum - minimum;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0, energy = 0.0, abs_dev = 0.0;
  for (double v : vals) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    energy += v * v;
    abs_dev += std::fabs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double variance = m2;
  const double stddev = std::sqrt(m2);
  const double skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;  // non-excess
  const double total_energy = energy * vol.voxel_volume_mm3();
  const double rms = std::sqrt(energy / n);
  const double p10 = percentile_sorted(sorted, 10.0);
  const double p90 = percentile_sorted(sorted, 90.0);
  const double iqr =
      percentile_sorted(sorted, 75.0) - percentile_sorted(sorted, 25.0);
  const double mad = abs_dev / n;

  // histogram features on z-scored, scaled, fixed-bin-width values
  double entropy = 0.0, uniformity = 1.0;
  {
    std::map<long long, size_t> bins;
    if (stddev > 0.0) {
      for (double v : vals) {
        const double scaled = (v - mean) / stddev * opts.scale;
        bins[static_cast<long long>(std::floor(scaled / opts.bin_width))]++;
      }
    } else {
      bins[0] = vals.size();
    }
    entropy = 0.0;
    uniformity = 0.0;
    for (const auto& [bin, count] : bins) {
      const double p = static_cast<double>(count) / n;
      entropy -= p * std::log2(p);
      uniformity += p * p;
    }
    if (entropy == -0.0) entropy = 0.0;
  }

  return std::vector<double>{mean,     median,   minimum,      maximum,
                             range,    variance, stddev,       skewness,
                             kurtosis, energy,   total_energy, entropy,
                             uniformity, p10,    p90,          iqr,
                             mad,      rms,      comp.volume_mm3,
                             comp.longest_diameter_mm};
}

// ---- two-step normalization: shift-to-positive log, then z-score ----

struct NormalizerState {
  std::vector<std::string> columns;
  std::vector<double> col_min;     // training minimum per column
  std::vector<double> med_shift;   // median of (x - min) per column
  std::vector<double> mu;          // mean of log-transformed column
  std::vector<double> sigma;       // population std of log-transformed column
  double epsilon = 1e-6;
};

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  size_t n_rows() const { return rows.size(); }
  size_t n_cols() const { return columns.size(); }
};

namespace detail {

inline double log_transform(double x, double col_min, double med_shift,
                            double epsilon) {
  return std::log(std::max(x - col_min + med_shift, epsilon));
}

}  // namespace detail

inline NormalizerState fit_normalizer(const FeatureMatrix& m,
                                      double epsilon = 1e-6) {
  if (m.n_rows() < 2) throw DataError("normalizer needs at least 2 rows");
  for (const auto& r : m.rows)
    if (r.size() != m.n_cols()) throw DataError("ragged feature matrix");

  NormalizerState st;
  st.columns = m.columns;
  st.epsilon = epsilon;
  const size_t d = m.n_cols();
  st.col_min.resize(d);
  st.med_shift.resize(d);
  st.mu.resize(d);
  st.sigma.resize(d);

  std::vector<double> col(m.n_rows());
  for (size_t j = 0; j < d; ++j) {
    for (size_t i = 0; i < m.n_rows(); ++i) col[i] = m.rows[i][j];
    const double mn = *std::min_element(col.begin(), col.end());
    std::vector<double> shifted(col.size());
    for (size_t i = 0; i < col.size(); ++i) shifted[i] = col[i] - mn;
    std::sort(shifted.begin(), shifted.end());
    const double med = median_sorted(shifted);
    std::vector<double> logged(col.size());
    for (size_t i = 0; i < col.size(); ++i)
      logged[i] = detail::log_transform(col[i], mn, med, epsilon);
    st.col_min[j] = mn;
    st.med_shift[j] = med;
    st.mu[j] = vec_mean(logged);
    st.sigma[j] = population_std(logged);
  }
  return st;
}

// Applies frozen training statistics; never refits. Degenerate columns
// (sigma == 0) map to zero.
inline FeatureMatrix apply_normalizer(const FeatureMatrix& m,
                                      const NormalizerState& st) {
  if (m.columns != st.columns)
    throw DataError("feature columns do not match the fitted normalizer");
  FeatureMatrix out;
  out.columns = m.columns;
  out.rows.reserve(m.n_rows());
  for (const auto& row : m.rows) {
    if (row.size() != st.columns.size())
      throw DataError("ragged feature matrix");
    std::vector<double> r(row.size());
    for (size_t j = 0; j < row.size(); ++j) {
      if (st.sigma[j] == 0.0) {
        r[j] = 0.0;
        continue;
      }
      const double logged = detail::log_transform(row[j], st.col_min[j],
                                                  st.med_shift[j], st.epsilon);
      r[j] = (logged - st.mu[j]) / st.sigma[j];
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

// ---- predicted-segmentation filtering ----

enum class Phase { Pre, Post };

inline Phase phase_from_string(const std::string& s) {
  if (s == "pre") return Phase::Pre;
  if (s == "post") return Phase::Post;
  throw DataError("unknown phase: " + s);
}

inline const char* phase_name(Phase p) {
  return p == Phase::Pre ? "pre" : "post";
}

struct TumorRecord {
  std::string patient_id;
  std::string tumor_id;
  Phase phase = Phase::Post;
  double volume_mm3 = 0.0;
  double longest_diameter_mm = 0.0;
  std::vector<double> features;
};

// 1st-percentile (by default) of ground-truth diameters, linear
// interpolation between order statistics.
inline double diameter_percentile_threshold(std::vector<double> gt_diameters,
                                            double percentile = 1.0) {
  if (gt_diameters.empty())
    throw DataError("no ground-truth diameters to take a percentile of");
  std::sort(gt_diameters.begin(), gt_diameters.end());
  return percentile_sorted(gt_diameters, percentile);
}

// Drops tumors with longest diameter <= threshold.
inline std::vector<TumorRecord> filter_small_predictions(
    std::vector<TumorRecord> records, double threshold_mm) {
  std::vector<TumorRecord> kept;
  kept.reserve(records.size());
  for (auto& r : records)
    if (r.longest_diameter_mm > threshold_mm) kept.push_back(std::move(r));
  return kept;
}

}  // namespace crlm::radiomics
