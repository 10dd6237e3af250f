// Acceptance suite: one self-contained check per criterion, one PASS/FAIL
// line each, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "crlm/components.hpp"
#include "crlm/metrics.hpp"
#include "crlm/pipeline.hpp"
#include "crlm/radiomics.hpp"
#include "crlm/rng.hpp"
#include "crlm/samonai.hpp"
#include "crlm/survnet.hpp"
#include "crlm/survstats.hpp"
#include "crlm/survtrain.hpp"
#include "crlm/volume.hpp"
#include "oracles.hpp"

using namespace crlm;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int index, std::string name)
      : index_(index), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& detail) {
    if (!ok) {
      ok_ = false;
      if (!detail_.empty()) detail_ += "; ";
      detail_ += detail;
    }
  }

  ~Criterion() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_)
            .count();
    if (ok_) {
      std::printf("[PASS] criterion %d: %s (%.2fs)\n", index_, name_.c_str(),
                  secs);
    } else {
      std::printf("[FAIL] criterion %d: %s (%.2fs) -- %s\n", index_,
                  name_.c_str(), secs, detail_.c_str());
      ++g_failures;
    }
    std::fflush(stdout);
  }

 private:
  int index_;
  std::string name_;
  bool ok_ = true;
  std::string detail_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- criterion 1 ----
void criterion_f1_anchor() {
  Criterion c(1, "detection F1 arithmetic anchor (TP 36, FP 14, FN 5)");
  const auto r = metrics::detection_from_counts(36, 14, 5);
  c.check(std::fabs(r.precision - 0.720) <= 0.001,
          "precision " + fmt(r.precision));
  c.check(std::fabs(r.recall - 0.878) <= 0.001, "recall " + fmt(r.recall));
  c.check(std::fabs(r.f1 - 0.791) <= 0.001, "f1 " + fmt(r.f1));
}

// ---- criterion 2 ----
void criterion_gradients() {
  Criterion c(2, "analytic vs finite-difference gradients, all losses");
  Rng rng(606);
  std::vector<surv::PatientBag> bags;
  for (int i = 0; i < 7; ++i) {
    surv::PatientBag b;
    b.patient_id = oracles::patient_name(i);
    const int tumors = rng.uniform_int(1, 3);
    for (int t = 0; t < tumors; ++t) {
      std::vector<double> x(6);
      for (auto& v : x) v = rng.normal();
      b.instances.push_back(std::move(x));
    }
    b.time_months = 1.0 + 50.0 * rng.uniform();
    b.event = rng.uniform() < 0.6 ? 1 : 0;
    b.largest_index = rng.uniform_int(0, tumors - 1);
    bags.push_back(std::move(b));
  }
  bags[0].event = 1;
  surv::NetConfig nc;
  nc.input_dim = 6;
  nc.encoder = {10, 8, 5};
  nc.regressor = {4};
  const auto net = surv::Network::init(nc, 17);
  for (double alpha : {0.0, 0.5, 1.0}) {
    for (auto mode : {surv::PoolMode::Mean, surv::PoolMode::Largest,
                      surv::PoolMode::Max, surv::PoolMode::Lse}) {
      const auto res =
          surv::gradient_check(net, bags, mode, alpha, 1e-5, 64, 909);
      c.check(res.max_rel_error < 1e-4,
              std::string("alpha ") + fmt(alpha) + " " +
                  surv::pool_name(mode) + ": rel err " +
                  fmt(res.max_rel_error));
    }
  }
}

// ---- criterion 3 ----
void criterion_cindex_oracle() {
  Criterion c(3, "c-index equals brute-force pair enumeration, 500 runs");
  Rng rng(707);
  int tested = 0;
  while (tested < 500) {
    const int n = rng.uniform_int(2, 12);
    std::vector<double> t(static_cast<size_t>(n)), h(static_cast<size_t>(n));
    std::vector<int> d(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      t[static_cast<size_t>(i)] = rng.uniform_int(1, 8);
      h[static_cast<size_t>(i)] = rng.uniform_int(0, 5);
      d[static_cast<size_t>(i)] = rng.uniform() < 0.55 ? 1 : 0;
    }
    if (!oracles::has_usable_pair(t, d)) continue;
    ++tested;
    const double lib = stats::c_index(t, d, h);
    const double oracle = oracles::brute_c_index(t, d, h);
    if (lib != oracle) {
      c.check(false, "instance " + std::to_string(tested) + ": " + fmt(lib) +
                         " vs " + fmt(oracle));
      return;
    }
  }
  c.check(true, "");
}

// ---- criterion 4 ----
void criterion_lse_bound() {
  Criterion c(4, "LSE pooling bound on 10^4 random hazard vectors");
  Rng rng(808);
  for (int rep = 0; rep < 10000; ++rep) {
    const int n = rng.uniform_int(2, 10);
    std::vector<double> h(static_cast<size_t>(n));
    for (auto& v : h) v = rng.uniform(-12.0, 12.0);
    const double mx = *std::max_element(h.begin(), h.end());
    const double lse = surv::pool(h, surv::PoolMode::Lse);
    if (!(lse > mx) || !(lse <= mx + std::log(n) + 1e-12)) {
      c.check(false, "violated at rep " + std::to_string(rep));
      return;
    }
  }
  const std::vector<double> eq{1.5, 1.5, 1.5, 1.5};
  c.check(surv::pool(eq, surv::PoolMode::Lse) ==
              1.5 + std::log(4.0),
          "equality case");
  const std::vector<double> ne{1.5, 1.5, 1.5, 1.4999999};
  c.check(surv::pool(ne, surv::PoolMode::Lse) < 1.5 + std::log(4.0),
          "strictness case");
  c.check(surv::pool(std::vector<double>{3.25}, surv::PoolMode::Lse) == 3.25,
          "singleton case");
}

// ---- criterion 5 ----
void criterion_cox_oracle() {
  Criterion c(5, "Cox fit vs grid search; Cox loss shift invariance");
  const std::vector<std::vector<double>> z{{1}, {0}, {1}, {0}};
  const std::vector<double> t{1, 2, 3, 4};
  const std::vector<int> d{1, 1, 1, 0};
  const auto fit = stats::cox_fit(z, t, d);
  c.check(fit.converged, "fit did not converge");
  const double best =
      oracles::grid_search_cox_beta({1, 0, 1, 0}, t, d);
  c.check(std::fabs(fit.beta[0] - best) < 1e-4,
          "|beta - beta*| = " + fmt(std::fabs(fit.beta[0] - best)));

  Rng rng(505);
  std::vector<double> eta{0.4, -0.9, 1.3, 0.1, -2.0, 0.7};
  std::vector<double> tt{3, 9, 1, 7, 5, 2};
  std::vector<int> dd{1, 0, 1, 1, 0, 1};
  const double base = surv::loss_cox(eta, tt, dd);
  for (int k = 0; k < 20; ++k) {
    const double shift = rng.uniform(-10.0, 10.0);
    auto shifted = eta;
    for (auto& e : shifted) e += shift;
    const double diff = std::fabs(surv::loss_cox(shifted, tt, dd) - base);
    if (diff >= 1e-10) {
      c.check(false, "shift " + fmt(shift) + " moved the loss by " + fmt(diff));
      return;
    }
  }
}

// ---- criterion 6 ----
void criterion_samonai_phantoms() {
  Criterion c(6, "prompt propagation on cube and sphere phantoms");
  const samonai::RegionGrowSegmenter seg(0.5);

  {  // cube 20^3 centered in 48^3
    auto vol = Volume3D::filled(48, 48, 48, {1, 1, 1}, 0.f);
    auto gt = Mask3D::zeros(48, 48, 48, {1, 1, 1});
    for (int z = 14; z < 34; ++z)
      for (int y = 14; y < 34; ++y)
        for (int x = 14; x < 34; ++x) {
          vol.at(x, y, z) = 100.f;
          gt.at(x, y, z) = 1;
        }
    samonai::SeedObject seed;
    seed.label = 1;
    seed.view = View::Axial;
    seed.positives = {{24, 24, 24}};
    const auto res = samonai::propagate_object(vol, seed, seg, {});
    c.check(res.ok, "cube propagation failed");
    if (res.ok) {
      const double dc = metrics::dice(res.mask, gt, 1);
      c.check(dc >= 0.99, "cube dice " + fmt(dc));
    }
  }

  {  // sphere radius 8 in 32^3
    auto vol = Volume3D::filled(32, 32, 32, {1, 1, 1}, 0.f);
    auto gt = Mask3D::zeros(32, 32, 32, {1, 1, 1});
    for (int z = 0; z < 32; ++z)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          const double dx = x - 16, dy = y - 16, dz = z - 16;
          if (dx * dx + dy * dy + dz * dz <= 64.0) {
            vol.at(x, y, z) = 100.f;
            gt.at(x, y, z) = 1;
          }
        }
    samonai::SeedObject seed;
    seed.label = 1;
    seed.view = View::Axial;
    seed.positives = {{16, 16, 16}};
    const auto res = samonai::propagate_object(vol, seed, seg, {});
    c.check(res.ok, "sphere propagation failed");
    if (res.ok) {
      const double dc = metrics::dice(res.mask, gt, 1);
      c.check(dc >= 0.90, "sphere dice " + fmt(dc));
    }

    samonai::PropagateConfig serial, threaded;
    serial.threads = 1;
    threaded.threads = 4;
    const auto a = samonai::propagate_object(vol, seed, seg, serial);
    const auto b = samonai::propagate_object(vol, seed, seg, threaded);
    const bool same =
        a.ok && b.ok &&
        std::equal(a.fused.logits.data().begin(), a.fused.logits.data().end(),
                   b.fused.logits.data().begin()) &&
        a.fused.threshold == b.fused.threshold &&
        std::equal(a.mask.data().begin(), a.mask.data().end(),
                   b.mask.data().begin());
    c.check(same, "1-thread vs 4-thread outputs differ");
  }
}

// ---- criteria 7 and 8 share the CV machinery ----

pipeline::PipelineConfig survival_config(int repeats) {
  pipeline::PipelineConfig cfg;
  cfg.seed = 20250810;
  cfg.folds = 3;
  cfg.repeats = repeats;
  cfg.pool = "lse";
  cfg.epochs = 150;
  cfg.learning_rate = 3e-3;
  cfg.weight_decay = 1e-3;
  cfg.dropout = 0.2;
  cfg.encoder = {16, 8};
  cfg.regressor = {4};
  cfg.threads = 1;
  return cfg;
}

csv::FeatureTable table_of(const oracles::Cohort& cohort) {
  csv::FeatureTable t;
  for (int i = 0; i < cohort.n_features; ++i)
    t.feature_names.push_back("f" + std::to_string(i));
  t.records = cohort.records;
  return t;
}

csv::SurvivalTable survival_of(const oracles::Cohort& cohort) {
  csv::SurvivalTable t;
  for (const auto& [id, te] : cohort.survival)
    t[id] = csv::SurvivalRecord{te.first, te.second};
  return t;
}

void criterion_planted_signal() {
  Criterion c(7, "planted-signal survival run with randomization test");
  const auto cohort = oracles::planted_cohort(200, 4, 2.0, 0.40, 424242, 2);
  const auto features = table_of(cohort);
  const auto survival = survival_of(cohort);

  auto cfg = survival_config(3);
  const auto man = pipeline::run_cv(cfg, features, survival);
  c.check(man.cindex_mean >= 0.75,
          "planted mean C-index " + fmt(man.cindex_mean));

  // shuffled labels hover at chance
  {
    auto shuffled = survival;
    std::vector<csv::SurvivalRecord> recs;
    for (const auto& [id, r] : shuffled) recs.push_back(r);
    Rng rng(31337);
    rng.shuffle(recs);
    size_t k = 0;
    for (auto& [id, r] : shuffled) r = recs[k++];
    const auto null_man = pipeline::run_cv(cfg, features, shuffled);
    c.check(null_man.cindex_mean >= 0.4 && null_man.cindex_mean <= 0.6,
            "shuffled mean C-index " + fmt(null_man.cindex_mean));
  }

  // randomization test with R = 200
  {
    auto rt_cfg = cfg;
    rt_cfg.randomization_rounds = 200;
    const auto rt_man = pipeline::run_cv(rt_cfg, features, survival);
    c.check(rt_man.randomization_p_defined, "p undefined");
    c.check(rt_man.randomization_p <= 1.0 / 200.0,
            "empirical p " + fmt(rt_man.randomization_p));
  }
}

void criterion_pooling_order() {
  Criterion c(8, "pooling ordering on worst-tumor-driven multifocal data");
  const auto cohort = oracles::worst_tumor_cohort(150, 4, 171717);
  const auto features = table_of(cohort);
  const auto survival = survival_of(cohort);
  auto cfg = survival_config(3);
  std::map<std::string, double> score;
  for (const std::string pool : {"lse", "max", "mean"}) {
    cfg.pool = pool;
    score[pool] = pipeline::run_cv(cfg, features, survival).cindex_mean;
  }
  c.check(score["lse"] >= score["max"],
          "lse " + fmt(score["lse"]) + " < max " + fmt(score["max"]));
  c.check(score["max"] >= score["mean"],
          "max " + fmt(score["max"]) + " < mean " + fmt(score["mean"]));
}

// ---- criterion 9 ----
void criterion_normalization() {
  Criterion c(9, "two-step normalization properties");
  Rng rng(911);
  {  // standardization on a sizeable matrix
    radiomics::FeatureMatrix m;
    m.columns = {"a", "b", "c", "d"};
    for (int i = 0; i < 200; ++i)
      m.rows.push_back({rng.uniform(0, 100), rng.normal(50, 10),
                        rng.uniform(-5, 5), rng.normal(0, 3)});
    const auto st = radiomics::fit_normalizer(m);
    const auto out = radiomics::apply_normalizer(m, st);
    for (size_t j = 0; j < 4; ++j) {
      std::vector<double> col;
      for (const auto& r : out.rows) col.push_back(r[j]);
      c.check(std::fabs(vec_mean(col)) < 1e-9,
              "col " + std::to_string(j) + " mean " + fmt(vec_mean(col)));
      c.check(std::fabs(population_std(col) - 1.0) < 1e-9,
              "col " + std::to_string(j) + " std " +
                  fmt(population_std(col)));
    }
  }
  {  // constant columns map to zero
    radiomics::FeatureMatrix m;
    m.columns = {"k"};
    for (int i = 0; i < 10; ++i) m.rows.push_back({7.0});
    const auto out =
        radiomics::apply_normalizer(m, radiomics::fit_normalizer(m));
    for (const auto& r : out.rows)
      if (r[0] != 0.0) {
        c.check(false, "constant column did not map to zero");
        break;
      }
  }
  // monotonicity on 1000 random matrices
  for (int rep = 0; rep < 1000; ++rep) {
    radiomics::FeatureMatrix m;
    m.columns = {"f"};
    const int n = rng.uniform_int(2, 15);
    for (int i = 0; i < n; ++i) m.rows.push_back({rng.uniform(-100, 100)});
    const auto out =
        radiomics::apply_normalizer(m, radiomics::fit_normalizer(m));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (m.rows[i][0] < m.rows[j][0] && out.rows[i][0] > out.rows[j][0]) {
          c.check(false, "monotonicity broken at rep " + std::to_string(rep));
          return;
        }
  }
}

// ---- criterion 10 ----
void criterion_statistics_golden() {
  Criterion c(10, "KM, log-rank and Wilcoxon golden values");
  const auto curve = stats::kaplan_meier(std::vector<double>{1, 2},
                                         std::vector<int>{1, 1});
  c.check(std::fabs(curve.survival[0] - 0.5) < 1e-6,
          "S(1) = " + fmt(curve.survival[0]));
  c.check(std::fabs(curve.survival[1] - 0.0) < 1e-6,
          "S(2) = " + fmt(curve.survival[1]));

  const std::vector<double> t{1, 3, 4, 7};
  const std::vector<int> d{1, 0, 1, 1};
  const auto lr = stats::log_rank(t, d, t, d);
  c.check(std::fabs(lr.chi2) < 1e-6, "identical-groups chi2 " + fmt(lr.chi2));
  c.check(std::fabs(lr.p - 1.0) < 1e-6, "identical-groups p " + fmt(lr.p));

  const double p = stats::wilcoxon_rank_sum(std::vector<double>{1, 2, 3},
                                            std::vector<double>{4, 5, 6});
  c.check(std::fabs(p - 0.1) < 1e-6, "wilcoxon p " + fmt(p));
}

}  // namespace

int main() {
  criterion_f1_anchor();
  criterion_gradients();
  criterion_cindex_oracle();
  criterion_lse_bound();
  criterion_cox_oracle();
  criterion_samonai_phantoms();
  criterion_planted_signal();
  criterion_pooling_order();
  criterion_normalization();
  criterion_statistics_golden();
  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d criterion(s) failed\n", g_failures);
  }
  return g_failures;
}
