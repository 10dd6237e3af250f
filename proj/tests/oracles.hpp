// Test-only oracles and synthetic data generators. Everything here is an
// independent route to the values the library computes: naive formula
// transcriptions and brute-force enumerations, no shared code with the
// implementation paths they check.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "crlm/radiomics.hpp"
#include "crlm/rng.hpp"
#include "crlm/survnet.hpp"
#include "crlm/volume.hpp"

namespace oracles {

// max pairwise distance, all pairs, no pruning
inline double brute_diameter(const std::vector<std::array<int, 3>>& pts,
                             const std::array<double, 3>& sp) {
  double best = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = 0; j < pts.size(); ++j) {
      const double dx = (pts[i][0] - pts[j][0]) * sp[0];
      const double dy = (pts[i][1] - pts[j][1]) * sp[1];
      const double dz = (pts[i][2] - pts[j][2]) * sp[2];
      best = std::max(best, std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  return best;
}

// population sigma over an explicit pixel list
inline double brute_window_sigma(const crlm::Grid2D& img, int u0, int u1,
                                 int v0, int v1) {
  std::vector<double> vals;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) vals.push_back(img.at(u, v));
  double mu = 0;
  for (double x : vals) mu += x;
  mu /= vals.size();
  double acc = 0;
  for (double x : vals) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / vals.size());
}

// literal transcription of the concordance formula: all ordered pairs
inline double brute_c_index(const std::vector<double>& t,
                            const std::vector<int>& d,
                            const std::vector<double>& h,
                            bool half_ties = false) {
  double num = 0, den = 0;
  for (size_t j = 0; j < t.size(); ++j)
    for (size_t i = 0; i < t.size(); ++i) {
      if (!(t[j] < t[i]) || d[j] != 1) continue;
      den += 1;
      if (h[j] > h[i]) num += 1;
      else if (half_ties && h[j] == h[i]) num += 0.5;
    }
  return num / den;
}

inline bool has_usable_pair(const std::vector<double>& t,
                            const std::vector<int>& d) {
  for (size_t j = 0; j < t.size(); ++j)
    for (size_t i = 0; i < t.size(); ++i)
      if (t[j] < t[i] && d[j] == 1) return true;
  return false;
}

// naive Breslow partial log-likelihood for a single covariate
inline double naive_cox_loglik(double beta, const std::vector<double>& z,
                               const std::vector<double>& t,
                               const std::vector<int>& d) {
  double ll = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (d[i] != 1) continue;
    double risk = 0;
    for (size_t j = 0; j < t.size(); ++j)
      if (t[j] >= t[i]) risk += std::exp(beta * z[j]);
    ll += beta * z[i] - std::log(risk);
  }
  return ll;
}

// golden-section-free grid search, refined in three passes
inline double grid_search_cox_beta(const std::vector<double>& z,
                                   const std::vector<double>& t,
                                   const std::vector<int>& d) {
  double lo = -5.0, hi = 5.0, best = 0.0;
  for (int pass = 0; pass < 4; ++pass) {
    const int steps = 2000;
    double best_ll = -1e300;
    for (int k = 0; k <= steps; ++k) {
      const double b = lo + (hi - lo) * k / steps;
      const double ll = naive_cox_loglik(b, z, t, d);
      if (ll > best_ll) {
        best_ll = ll;
        best = b;
      }
    }
    const double width = (hi - lo) / steps;
    lo = best - 2 * width;
    hi = best + 2 * width;
  }
  return best;
}

// exhaustive maximum-cardinality one-to-one matching above a dice floor
inline int brute_max_matches(const std::vector<std::vector<double>>& dice,
                             double floor_value) {
  const size_t ng = dice.size();
  if (ng == 0) return 0;
  const size_t np = dice[0].size();
  std::vector<int> assign(ng, -1);
  int best = 0;
  std::vector<bool> used(np, false);
  std::function<void(size_t, int)> rec = [&](size_t g, int matched) {
    if (g == ng) {
      best = std::max(best, matched);
      return;
    }
    rec(g + 1, matched);  // leave g unmatched
    for (size_t p = 0; p < np; ++p) {
      if (used[p] || dice[g][p] < floor_value) continue;
      used[p] = true;
      rec(g + 1, matched + 1);
      used[p] = false;
    }
  };
  rec(0, 0);
  return best;
}

// ---- synthetic survival cohorts ----

struct Cohort {
  std::vector<crlm::radiomics::TumorRecord> records;
  std::map<std::string, std::pair<double, int>> survival;  // time, event
  int n_features = 0;
};

inline std::string patient_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%03d", i);
  return buf;
}

// Patient hazard linear in feature 0; exponential event times under
// proportional hazards; independent exponential censoring tuned near the
// requested fraction.
inline Cohort planted_cohort(int n_patients, int n_features, double beta,
                             double censor_rate, uint64_t seed,
                             int max_tumors = 3) {
  crlm::Rng rng(crlm::derive_seed(seed, crlm::RngStream::Synthetic));
  Cohort c;
  c.n_features = n_features;
  const double base_rate = std::log(2.0) / 28.0;  // median ~28 months at s=0
  for (int i = 0; i < n_patients; ++i) {
    const std::string id = patient_name(i);
    const double signal = rng.normal();
    const int n_tumors = max_tumors > 1 ? rng.uniform_int(1, max_tumors) : 1;
    for (int t = 0; t < n_tumors; ++t) {
      crlm::radiomics::TumorRecord rec;
      rec.patient_id = id;
      rec.tumor_id = "t" + std::to_string(t);
      rec.phase = crlm::radiomics::Phase::Post;
      rec.features.resize(n_features);
      rec.features[0] = signal + 0.05 * rng.normal();
      for (int f = 1; f < n_features; ++f) rec.features[f] = rng.normal();
      rec.volume_mm3 = 100.0 + 900.0 * rng.uniform();
      rec.longest_diameter_mm = 5.0 + 20.0 * rng.uniform();
      c.records.push_back(std::move(rec));
    }
    const double rate = base_rate * std::exp(beta * signal);
    const double event_time = rng.exponential(rate);
    double observed = event_time;
    int event = 1;
    if (censor_rate > 0) {
      const double censor_time =
          rng.exponential(base_rate * censor_rate / (1.0 - censor_rate));
      if (censor_time < event_time) {
        observed = censor_time;
        event = 0;
      }
    }
    c.survival[id] = {std::max(observed, 1e-3), event};
  }
  return c;
}

// Outcome driven by the worst tumors: the patient log-hazard is the
// log-sum-exp of per-tumor badness, so a single bad tumor dominates and
// several similarly bad tumors compound.
inline Cohort worst_tumor_cohort(int n_patients, int n_features,
                                 uint64_t seed) {
  crlm::Rng rng(crlm::derive_seed(seed, crlm::RngStream::Synthetic, 1));
  Cohort c;
  c.n_features = n_features;
  const double base_rate = std::log(2.0) / 28.0;
  for (int i = 0; i < n_patients; ++i) {
    const std::string id = patient_name(i);
    const int n_tumors = rng.uniform_int(1, 4);
    double lse = 0.0;
    std::vector<double> badness(n_tumors);
    for (int t = 0; t < n_tumors; ++t) badness[t] = rng.normal();
    double m = *std::max_element(badness.begin(), badness.end());
    double s = 0.0;
    for (double b : badness) s += std::exp(2.0 * (b - m));
    lse = 2.0 * m + std::log(s);
    for (int t = 0; t < n_tumors; ++t) {
      crlm::radiomics::TumorRecord rec;
      rec.patient_id = id;
      rec.tumor_id = "t" + std::to_string(t);
      rec.phase = crlm::radiomics::Phase::Post;
      rec.features.resize(n_features);
      rec.features[0] = badness[t] + 0.05 * rng.normal();
      for (int f = 1; f < n_features; ++f) rec.features[f] = rng.normal();
      rec.volume_mm3 = 100.0 + 900.0 * rng.uniform();
      rec.longest_diameter_mm = 5.0 + 20.0 * rng.uniform();
      c.records.push_back(std::move(rec));
    }
    const double rate = base_rate * std::exp(lse);
    const double event_time = rng.exponential(rate);
    const double censor_time = rng.exponential(base_rate * 0.4);
    c.survival[id] = {std::max(std::min(event_time, censor_time), 1e-3),
                      event_time <= censor_time ? 1 : 0};
  }
  return c;
}

// bags straight from a cohort, normalized features not required
inline std::vector<crlm::surv::PatientBag> cohort_bags(const Cohort& c) {
  std::map<std::string, crlm::surv::PatientBag> by_patient;
  std::map<std::string, double> best_vol;
  for (const auto& r : c.records) {
    auto& bag = by_patient[r.patient_id];
    if (bag.instances.empty()) {
      bag.patient_id = r.patient_id;
      bag.time_months = c.survival.at(r.patient_id).first;
      bag.event = c.survival.at(r.patient_id).second;
      best_vol[r.patient_id] = -1.0;
    }
    bag.instances.push_back(r.features);
    if (r.volume_mm3 > best_vol[r.patient_id]) {
      best_vol[r.patient_id] = r.volume_mm3;
      bag.largest_index = static_cast<int>(bag.instances.size()) - 1;
    }
  }
  std::vector<crlm::surv::PatientBag> bags;
  for (auto& [id, bag] : by_patient) bags.push_back(std::move(bag));
  return bags;
}

}  // namespace oracles
