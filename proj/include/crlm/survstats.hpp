#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/rng.hpp"
#include "crlm/threadpool.hpp"

namespace crlm::stats {

// ---- concordance index ----

// Proportion of usable ordered pairs (j an event, T_j < T_i) where the
// earlier-failing patient has the strictly higher hazard. Hazard ties
// score 0 by default (the literal formula); half_credit_ties switches to
// the 0.5 convention.
inline double c_index(std::span<const double> times,
                      std::span<const int> events,
                      std::span<const double> hazards,
                      bool half_credit_ties = false) {
  const size_t n = times.size();
  if (events.size() != n || hazards.size() != n)
    throw DataError("c-index input length mismatch");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return times[a] < times[b]; });

  long long usable = 0;
  double score = 0.0;
  for (size_t a = 0; a < n; ++a) {
    const size_t j = order[a];
    if (events[j] != 1) continue;
    size_t b = a + 1;
    while (b < n && times[order[b]] == times[j]) ++b;  // strict T_j < T_i
    for (; b < n; ++b) {
      const size_t i = order[b];
      ++usable;
      if (hazards[j] > hazards[i]) score += 1.0;
      else if (half_credit_ties && hazards[j] == hazards[i]) score += 0.5;
    }
  }
  if (usable == 0) throw DataError("no usable pairs for the c-index");
  return score / static_cast<double>(usable);
}

// ---- Cox proportional hazards fit ----

struct CoxFit {
  std::vector<double> beta, se, hr, z, p;
  double loglik = 0.0;
  bool converged = false;
  bool singular = false;
  int iterations = 0;
};

namespace detail {

// Gaussian elimination with partial pivoting; returns false on a
// (numerically) singular system.
inline bool solve_linear(std::vector<std::vector<double>> a,
                         std::vector<double> b, std::vector<double>& x) {
  const size_t p = b.size();
  for (size_t col = 0; col < p; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < p; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-12) return false;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (size_t r = col + 1; r < p; ++r) {
      const double f = a[r][col] / a[col][col];
      for (size_t c = col; c < p; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  x.assign(p, 0.0);
  for (size_t r = p; r-- > 0;) {
    double s = b[r];
    for (size_t c = r + 1; c < p; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return true;
}

inline bool invert_matrix(std::vector<std::vector<double>> a,
                          std::vector<std::vector<double>>& inv) {
  const size_t p = a.size();
  inv.assign(p, std::vector<double>(p, 0.0));
  for (size_t i = 0; i < p; ++i) inv[i][i] = 1.0;
  for (size_t col = 0; col < p; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < p; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (std::fabs(a[piv][col]) < 1e-12) return false;
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = a[col][col];
    for (size_t c = 0; c < p; ++c) {
      a[col][c] /= d;
      inv[col][c] /= d;
    }
    for (size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (size_t c = 0; c < p; ++c) {
        a[r][c] -= f * a[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return true;
}

struct PartialLikelihood {
  double loglik = 0.0;
  std::vector<double> score;
  std::vector<std::vector<double>> info;
};

// Breslow partial likelihood with analytic score and observed
// information, max-shifted linear predictors.
inline PartialLikelihood cox_eval(const std::vector<std::vector<double>>& z,
                                  std::span<const double> times,
                                  std::span<const int> events,
                                  const std::vector<double>& beta) {
  const size_t n = times.size();
  const size_t p = beta.size();
  std::vector<double> eta(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < p; ++k) eta[i] += z[i][k] * beta[k];
  double m = eta.empty() ? 0.0 : eta[0];
  for (double e : eta) m = std::max(m, e);

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (times[a] != times[b]) return times[a] > times[b];
    return a < b;
  });

  PartialLikelihood out;
  out.score.assign(p, 0.0);
  out.info.assign(p, std::vector<double>(p, 0.0));

  double s0 = 0.0;
  std::vector<double> s1(p, 0.0);
  std::vector<std::vector<double>> s2(p, std::vector<double>(p, 0.0));

  size_t a = 0;
  while (a < n) {  // sweep times descending, risk set grows
    size_t b = a;
    while (b < n && times[order[b]] == times[order[a]]) ++b;
    for (size_t k = a; k < b; ++k) {
      const size_t i = order[k];
      const double w = std::exp(eta[i] - m);
      s0 += w;
      for (size_t r = 0; r < p; ++r) {
        s1[r] += w * z[i][r];
        for (size_t c = 0; c < p; ++c) s2[r][c] += w * z[i][r] * z[i][c];
      }
    }
    for (size_t k = a; k < b; ++k) {
      const size_t i = order[k];
      if (events[i] != 1) continue;
      out.loglik += (eta[i] - m) - std::log(s0);
      for (size_t r = 0; r < p; ++r) {
        const double mean_r = s1[r] / s0;
        out.score[r] += z[i][r] - mean_r;
        for (size_t c = 0; c < p; ++c)
          out.info[r][c] += s2[r][c] / s0 - mean_r * (s1[c] / s0);
      }
    }
    a = b;
  }
  return out;
}

}  // namespace detail

struct CoxFitOptions {
  int max_iter = 100;
  double tol = 1e-8;  // max |score|
};

// Damped Newton maximization of the Breslow partial likelihood on
// (z-scored) covariates. Standard errors come from the inverse observed
// information at the optimum.
inline CoxFit cox_fit(const std::vector<std::vector<double>>& covariates,
                      std::span<const double> times,
                      std::span<const int> events,
                      const CoxFitOptions& opts = {}) {
  const size_t n = times.size();
  if (covariates.size() != n || events.size() != n)
    throw DataError("cox_fit input length mismatch");
  if (n == 0) throw DataError("cox_fit on empty data");
  const size_t p = covariates[0].size();
  if (p == 0) throw DataError("cox_fit needs at least one covariate");
  for (const auto& row : covariates)
    if (row.size() != p) throw DataError("ragged covariate matrix");
  bool any_event = false;
  for (int e : events) any_event |= (e == 1);
  if (!any_event) throw DataError("cox_fit needs at least one event");
  for (size_t k = 0; k < p; ++k) {
    const double v0 = covariates[0][k];
    bool constant = true;
    for (const auto& row : covariates) constant &= (row[k] == v0);
    if (constant) throw DataError("constant covariate in cox_fit");
  }

  CoxFit fit;
  fit.beta.assign(p, 0.0);
  auto cur = detail::cox_eval(covariates, times, events, fit.beta);

  for (int it = 0; it < opts.max_iter; ++it) {
    fit.iterations = it;
    double max_score = 0.0;
    for (double s : cur.score) max_score = std::max(max_score, std::fabs(s));
    if (max_score < opts.tol) {
      fit.converged = true;
      break;
    }
    std::vector<double> step;
    if (!detail::solve_linear(cur.info, cur.score, step)) {
      fit.singular = true;
      break;
    }
    // step-halving keeps the likelihood monotone
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 30; ++half) {
      std::vector<double> cand(p);
      for (size_t k = 0; k < p; ++k) cand[k] = fit.beta[k] + lambda * step[k];
      const auto eval = detail::cox_eval(covariates, times, events, cand);
      if (std::isfinite(eval.loglik) && eval.loglik >= cur.loglik - 1e-12) {
        fit.beta = cand;
        cur = eval;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  {
    double max_score = 0.0;
    for (double s : cur.score) max_score = std::max(max_score, std::fabs(s));
    if (max_score < opts.tol) fit.converged = true;
  }

  fit.loglik = cur.loglik;
  fit.se.assign(p, std::numeric_limits<double>::quiet_NaN());
  fit.hr.resize(p);
  fit.z.assign(p, std::numeric_limits<double>::quiet_NaN());
  fit.p.assign(p, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<double>> inv;
  const bool have_cov = detail::invert_matrix(cur.info, inv);
  if (!have_cov) fit.singular = true;
  for (size_t k = 0; k < p; ++k) {
    fit.hr[k] = std::exp(fit.beta[k]);
    if (have_cov && inv[k][k] > 0.0) {
      fit.se[k] = std::sqrt(inv[k][k]);
      fit.z[k] = fit.beta[k] / fit.se[k];
      fit.p[k] = two_sided_normal_p(fit.z[k]);
    }
  }
  return fit;
}

// Population z-scoring per column, the standardization used before Cox
// model fitting.
inline std::vector<std::vector<double>> zscore_columns(
    std::vector<std::vector<double>> m) {
  if (m.empty()) return m;
  const size_t p = m[0].size();
  for (size_t k = 0; k < p; ++k) {
    std::vector<double> col(m.size());
    for (size_t i = 0; i < m.size(); ++i) col[i] = m[i][k];
    const double mu = vec_mean(col);
    const double sd = population_std(col);
    if (sd == 0.0) throw DataError("constant column cannot be z-scored");
    for (size_t i = 0; i < m.size(); ++i) m[i][k] = (m[i][k] - mu) / sd;
  }
  return m;
}

// ---- Kaplan-Meier ----

struct SurvivalCurve {
  std::vector<double> times;     // distinct observed times, ascending
  std::vector<double> survival;  // S(t) after processing events at t
  std::vector<int> at_risk;      // subjects with T >= t
  std::string label;
};

inline SurvivalCurve kaplan_meier(std::span<const double> times,
                                  std::span<const int> events,
                                  std::string label = {}) {
  const size_t n = times.size();
  if (events.size() != n) throw DataError("kaplan_meier length mismatch");
  if (n == 0) throw DataError("kaplan_meier on empty data");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return times[a] < times[b]; });

  SurvivalCurve curve;
  curve.label = std::move(label);
  double s = 1.0;
  size_t at_risk = n;
  size_t a = 0;
  while (a < n) {
    size_t b = a;
    int d = 0, c = 0;
    while (b < n && times[order[b]] == times[order[a]]) {
      (events[order[b]] == 1 ? d : c)++;
      ++b;
    }
    if (d > 0)
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
    curve.times.push_back(times[order[a]]);
    curve.survival.push_back(s);
    curve.at_risk.push_back(static_cast<int>(at_risk));
    at_risk -= (d + c);
    a = b;
  }
  return curve;
}

// Step-function evaluation of a KM curve at arbitrary t.
inline double km_survival_at(const SurvivalCurve& curve, double t) {
  double s = 1.0;
  for (size_t i = 0; i < curve.times.size(); ++i) {
    if (curve.times[i] > t) break;
    s = curve.survival[i];
  }
  return s;
}

// ---- log-rank test ----

struct LogRankResult {
  double chi2 = 0.0;
  double p = 1.0;
};

inline LogRankResult log_rank(std::span<const double> times_a,
                              std::span<const int> events_a,
                              std::span<const double> times_b,
                              std::span<const int> events_b) {
  if (times_a.empty() || times_b.empty())
    throw DataError("log_rank needs two non-empty groups");
  std::vector<double> event_times;
  for (size_t i = 0; i < times_a.size(); ++i)
    if (events_a[i] == 1) event_times.push_back(times_a[i]);
  for (size_t i = 0; i < times_b.size(); ++i)
    if (events_b[i] == 1) event_times.push_back(times_b[i]);
  std::sort(event_times.begin(), event_times.end());
  event_times.erase(std::unique(event_times.begin(), event_times.end()),
                    event_times.end());

  double observed_a = 0.0, expected_a = 0.0, variance = 0.0;
  for (double t : event_times) {
    double n1 = 0, n2 = 0, d1 = 0, d2 = 0;
    for (size_t i = 0; i < times_a.size(); ++i) {
      if (times_a[i] >= t) ++n1;
      if (times_a[i] == t && events_a[i] == 1) ++d1;
    }
    for (size_t i = 0; i < times_b.size(); ++i) {
      if (times_b[i] >= t) ++n2;
      if (times_b[i] == t && events_b[i] == 1) ++d2;
    }
    const double nn = n1 + n2, d = d1 + d2;
    if (nn <= 0) continue;
    observed_a += d1;
    expected_a += d * n1 / nn;
    if (nn > 1)
      variance += d * (n1 / nn) * (n2 / nn) * (nn - d) / (nn - 1.0);
  }
  LogRankResult r;
  if (variance > 0.0) {
    const double diff = observed_a - expected_a;
    r.chi2 = diff * diff / variance;
    r.p = chi2_1df_sf(r.chi2);
  }
  return r;
}

// ---- Wilcoxon rank-sum ----

namespace detail {

inline std::vector<double> midranks(const std::vector<double>& pooled_sorted,
                                    const std::vector<double>& values) {
  std::vector<double> ranks(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const auto lo = std::lower_bound(pooled_sorted.begin(),
                                     pooled_sorted.end(), values[i]);
    const auto hi = std::upper_bound(pooled_sorted.begin(),
                                     pooled_sorted.end(), values[i]);
    const double first = static_cast<double>(lo - pooled_sorted.begin()) + 1.0;
    const double last = static_cast<double>(hi - pooled_sorted.begin());
    ranks[i] = 0.5 * (first + last);
  }
  return ranks;
}

}  // namespace detail

// Two-sided p for the rank-sum statistic; exact enumeration over all
// group assignments when nA + nB <= 12, otherwise the tie-corrected
// normal approximation (no continuity correction).
inline double wilcoxon_rank_sum(std::span<const double> sample_a,
                                std::span<const double> sample_b) {
  if (sample_a.empty() || sample_b.empty())
    throw DataError("wilcoxon needs two non-empty samples");
  const size_t na = sample_a.size(), nb = sample_b.size(), n = na + nb;
  std::vector<double> pooled(sample_a.begin(), sample_a.end());
  pooled.insert(pooled.end(), sample_b.begin(), sample_b.end());
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  const std::vector<double> all_ranks = detail::midranks(sorted, pooled);

  double w = 0.0;  // rank sum of sample A
  for (size_t i = 0; i < na; ++i) w += all_ranks[i];

  if (n <= 12) {
    // enumerate all C(n, na) subsets of the pooled ranks
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<long>(na), true);
    long long total = 0, count_le = 0, count_ge = 0;
    const double eps = 1e-9;
    do {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i)
        if (pick[i]) s += all_ranks[i];
      ++total;
      if (s <= w + eps) ++count_le;
      if (s >= w - eps) ++count_ge;
    } while (std::prev_permutation(pick.begin(), pick.end()));
    const double tail =
        static_cast<double>(std::min(count_le, count_ge)) /
        static_cast<double>(total);
    return std::min(1.0, 2.0 * tail);
  }

  const double nd = static_cast<double>(n);
  const double mu = static_cast<double>(na) * (nd + 1.0) / 2.0;
  // tie correction over groups of equal values
  double tie_term = 0.0;
  for (size_t i = 0; i < sorted.size();) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = static_cast<double>(na) * static_cast<double>(nb) /
                     12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (var <= 0.0) return 1.0;
  const double z = (w - mu) / std::sqrt(var);
  return two_sided_normal_p(z);
}

// ---- bootstrap hazard ratio ----

struct BootstrapHr {
  double hr_mean = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  double wald_z = 0.0;
  double wald_p = 1.0;
  int failures = 0;
  bool degenerate = false;  // zero spread in the bootstrapped log-HRs
  std::vector<double> hrs;
};

struct WaldTest {
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

// z = mean(log HR) / sample SD(log HR), p = 2 * (1 - Phi(|z|)).
// With zero spread: p = 1 when the mean is also 0, else p = 0, flagged.
inline WaldTest wald_from_log_hrs(std::span<const double> log_hrs) {
  if (log_hrs.empty()) throw DataError("wald test over no estimates");
  WaldTest w;
  const double mean_log = vec_mean(log_hrs);
  const double sd_log = sample_std(log_hrs);
  if (sd_log == 0.0) {
    w.degenerate = true;
    w.z = 0.0;
    w.p = mean_log == 0.0 ? 1.0 : 0.0;
  } else {
    w.z = mean_log / sd_log;
    w.p = two_sided_normal_p(w.z);
  }
  return w;
}

// B patient resamples with replacement; each refits a univariate Cox
// model on the z-scored hazard. Replicate b draws from seed base + b.
inline BootstrapHr bootstrap_hr(std::span<const double> hazards,
                                std::span<const double> times,
                                std::span<const int> events, int b_rounds,
                                uint64_t seed, int threads = 1) {
  const size_t n = hazards.size();
  if (times.size() != n || events.size() != n)
    throw DataError("bootstrap_hr input length mismatch");
  if (b_rounds < 2) throw DataError("bootstrap needs B >= 2");

  std::vector<double> betas(static_cast<size_t>(b_rounds),
                            std::numeric_limits<double>::quiet_NaN());
  parallel_for(static_cast<size_t>(b_rounds), threads, [&](size_t b) {
    Rng rng(seed + static_cast<uint64_t>(b));
    std::vector<double> h(n), t(n);
    std::vector<int> e(n);
    for (size_t i = 0; i < n; ++i) {
      const size_t k = static_cast<size_t>(rng.below(n));
      h[i] = hazards[k];
      t[i] = times[k];
      e[i] = events[k];
    }
    const double mu = vec_mean(h);
    const double sd = population_std(h);
    if (sd == 0.0) return;  // constant covariate, failed replicate
    std::vector<std::vector<double>> z(n, std::vector<double>(1));
    for (size_t i = 0; i < n; ++i) z[i][0] = (h[i] - mu) / sd;
    try {
      const auto fit = cox_fit(z, t, e);
      if (fit.converged && !fit.singular) betas[b] = fit.beta[0];
    } catch (const DataError&) {
      // no events in the resample: failed replicate
    }
  });

  BootstrapHr out;
  std::vector<double> ok_betas;
  for (double b : betas) {
    if (std::isnan(b)) ++out.failures;
    else ok_betas.push_back(b);
  }
  if (out.failures * 2 > b_rounds)
    throw NumericError("more than half of the bootstrap resamples failed");

  out.hrs.reserve(ok_betas.size());
  for (double b : ok_betas) out.hrs.push_back(std::exp(b));
  std::vector<double> sorted_hrs = out.hrs;
  std::sort(sorted_hrs.begin(), sorted_hrs.end());
  out.hr_mean = vec_mean(out.hrs);
  out.ci_low = percentile_sorted(sorted_hrs, 2.5);
  out.ci_high = percentile_sorted(sorted_hrs, 97.5);

  const auto wald = wald_from_log_hrs(ok_betas);
  out.wald_z = wald.z;
  out.wald_p = wald.p;
  out.degenerate = wald.degenerate;
  return out;
}

// ---- randomization test ----

struct RandomizationResult {
  std::vector<double> null_scores;
  double observed = 0.0;
  double p = std::numeric_limits<double>::quiet_NaN();
  bool p_defined = false;
};

// Reruns the full pipeline on jointly shuffled (time, event) labels.
// Replicate r shuffles with seed base + r; the runner must be
// deterministic so concurrent execution equals sequential.
template <typename Runner>
RandomizationResult randomization_test(Runner&& runner,
                                       std::span<const double> times,
                                       std::span<const int> events,
                                       int rounds, uint64_t base_seed,
                                       int threads = 1) {
  if (times.size() != events.size())
    throw DataError("randomization_test input length mismatch");
  RandomizationResult out;
  out.observed = runner(std::vector<double>(times.begin(), times.end()),
                        std::vector<int>(events.begin(), events.end()));
  if (rounds <= 0) {
    log_info("randomization test with R = 0: empirical p undefined");
    return out;
  }
  out.null_scores.assign(static_cast<size_t>(rounds), 0.0);
  const size_t n = times.size();
  parallel_for(static_cast<size_t>(rounds), threads, [&](size_t r) {
    Rng rng(base_seed + static_cast<uint64_t>(r));
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> t(n);
    std::vector<int> e(n);
    for (size_t i = 0; i < n; ++i) {
      t[i] = times[perm[i]];
      e[i] = events[perm[i]];
    }
    out.null_scores[r] = runner(std::move(t), std::move(e));
  });
  size_t ge = 0;
  for (double s : out.null_scores)
    if (s >= out.observed) ++ge;
  out.p = static_cast<double>(ge) / static_cast<double>(rounds);
  out.p_defined = true;
  return out;
}

// ---- risk stratification ----

struct Stratification {
  std::vector<int> group;  // 1 = high risk (hazard > median), 0 = low
  double median = 0.0;
};

inline Stratification stratify(std::span<const double> hazards) {
  if (hazards.size() < 2) throw DataError("stratify needs >= 2 patients");
  std::vector<double> sorted(hazards.begin(), hazards.end());
  std::sort(sorted.begin(), sorted.end());
  Stratification s;
  s.median = median_sorted(sorted);
  s.group.reserve(hazards.size());
  for (double h : hazards) s.group.push_back(h > s.median ? 1 : 0);
  return s;
}

}  // namespace crlm::stats
