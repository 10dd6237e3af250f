#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/radiomics.hpp"
#include "crlm/rng.hpp"
#include "crlm/survnet.hpp"

namespace crlm::surv {

// Decoupled weight decay: p -= lr * (mhat / (sqrt(vhat) + eps) + wd * p).
class AdamW {
 public:
  AdamW(size_t n, double lr, double weight_decay)
      : lr_(lr), wd_(weight_decay), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * params[i]);
    }
  }

 private:
  double lr_;
  double wd_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  std::vector<int> encoder = {64, 32, 16};
  std::vector<int> regressor = {8};
  double dropout = 0.2;
  int epochs = 250;
  double learning_rate = 4e-4;
  double weight_decay = 1e-3;
  PoolMode pool = PoolMode::Lse;
  uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw DataError("epochs must be >= 0");
    if (!(learning_rate > 0)) throw DataError("learning rate must be positive");
    if (weight_decay < 0) throw DataError("weight decay must be >= 0");
  }
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_alpha;
};

// Joint training: each epoch draws a censoring-balanced batch, evaluates
// (1 - alpha) * MSE + alpha * Cox with alpha = epoch / total_epochs, and
// takes one AdamW step. Deterministic given the seed.
inline Network train(std::span<const PatientBag> bags, int input_dim,
                     const TrainConfig& cfg, TrainLog* log = nullptr) {
  cfg.validate();
  NetConfig nc;
  nc.input_dim = input_dim;
  nc.encoder = cfg.encoder;
  nc.regressor = cfg.regressor;
  nc.dropout = cfg.dropout;
  Network net = Network::init(nc, cfg.seed);
  if (cfg.epochs == 0) return net;

  std::vector<size_t> censored, uncensored;
  for (size_t i = 0; i < bags.size(); ++i) {
    if (static_cast<int>(bags[i].instances.empty() ? 0 : bags[i].instances[0].size()) !=
        input_dim)
      throw DataError("bag feature dimension mismatch");
    (bags[i].event == 1 ? uncensored : censored).push_back(i);
  }
  if (uncensored.empty()) throw DataError("no uncensored patients");

  AdamW opt(net.param_count(), cfg.learning_rate, cfg.weight_decay);
  std::vector<double> grad;
  const double total = static_cast<double>(cfg.epochs);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double alpha = static_cast<double>(epoch) / total;

    // balanced batch: min(#censored, #uncensored) from each group,
    // without replacement. If one group is absent the whole other group
    // is used instead.
    Rng sample_rng(derive_seed(cfg.seed, RngStream::EpochSample,
                               static_cast<uint64_t>(epoch)));
    std::vector<size_t> batch;
    if (censored.empty()) {
      batch = uncensored;
    } else {
      std::vector<size_t> c = censored, u = uncensored;
      sample_rng.shuffle(u);
      sample_rng.shuffle(c);
      const size_t m = std::min(c.size(), u.size());
      batch.assign(u.begin(), u.begin() + m);
      batch.insert(batch.end(), c.begin(), c.begin() + m);
    }

    std::vector<const PatientBag*> ptrs;
    size_t n_instances = 0;
    for (size_t i : batch) {
      ptrs.push_back(&bags[i]);
      n_instances += bags[i].instances.size();
    }

    Rng drop_rng(derive_seed(cfg.seed, RngStream::Dropout,
                             static_cast<uint64_t>(epoch)));
    const DropoutPlan plan =
        DropoutPlan::make(net, n_instances, cfg.dropout, drop_rng);

    const auto ev =
        combined_loss(net, ptrs, cfg.pool, alpha, &plan, &grad);
    opt.step(net.params(), grad);

    if (log) {
      log->epoch_loss.push_back(ev.loss);
      log->epoch_alpha.push_back(alpha);
    }
  }
  return net;
}

// ---- gradient verification ----

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t params_checked = 0;
};

// Analytic gradient of the combined loss vs central finite differences
// over a random parameter subset, double precision, dropout off.
// Gradients whose magnitude is below 1e-6 on both sides are counted as
// matching (they sit at the finite-difference noise floor).
inline GradCheckResult gradient_check(const Network& net,
                                      std::span<const PatientBag> bags,
                                      PoolMode mode, double alpha,
                                      double h = 1e-5, size_t max_params = 64,
                                      uint64_t seed = 0) {
  if (!(h > 0)) throw DataError("h must be positive");
  std::vector<const PatientBag*> ptrs;
  for (const auto& b : bags) ptrs.push_back(&b);

  std::vector<double> analytic;
  combined_loss(net, ptrs, mode, alpha, nullptr, &analytic);

  std::vector<size_t> idx(net.param_count());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, RngStream::NetInit, 0xfd));
  rng.shuffle(idx);
  const size_t n_check = std::min(max_params, idx.size());

  GradCheckResult res;
  res.params_checked = n_check;
  Network probe = net;
  for (size_t t = 0; t < n_check; ++t) {
    const size_t p = idx[t];
    const double saved = probe.params()[p];
    probe.params()[p] = saved + h;
    const double lp =
        combined_loss(probe, ptrs, mode, alpha, nullptr, nullptr).loss;
    probe.params()[p] = saved - h;
    const double lm =
        combined_loss(probe, ptrs, mode, alpha, nullptr, nullptr).loss;
    probe.params()[p] = saved;
    const double numeric = (lp - lm) / (2.0 * h);
    const double a = analytic[p];
    const double scale = std::max(std::fabs(a), std::fabs(numeric));
    if (scale < 1e-6) continue;
    res.max_rel_error = std::max(res.max_rel_error,
                                 std::fabs(a - numeric) / scale);
  }
  return res;
}

// ---- late fusion of phase-wise hazards ----

// Per-patient mean of the available phase hazards; a patient present in
// neither map is an error.
inline std::map<std::string, double> late_fusion(
    const std::map<std::string, double>& pre,
    const std::map<std::string, double>& post) {
  std::map<std::string, double> fused;
  for (const auto& [id, h] : pre) {
    const auto it = post.find(id);
    fused[id] = it == post.end() ? h : 0.5 * (h + it->second);
  }
  for (const auto& [id, h] : post)
    if (!pre.contains(id)) fused[id] = h;
  if (fused.empty()) throw DataError("no patients in either phase");
  return fused;
}

// ---- bag assembly ----

// Bags per patient for one phase; largest tumor by stored volume.
inline std::vector<PatientBag> build_bags(
    std::span<const radiomics::TumorRecord> records,
    const std::map<std::string, std::pair<double, int>>& survival,
    radiomics::Phase phase) {
  std::map<std::string, PatientBag> by_patient;
  std::map<std::string, double> best_volume;
  for (const auto& r : records) {
    if (r.phase != phase) continue;
    const auto surv = survival.find(r.patient_id);
    if (surv == survival.end())
      throw DataError("patient " + r.patient_id + " has no survival record");
    auto& bag = by_patient[r.patient_id];
    if (bag.instances.empty()) {
      bag.patient_id = r.patient_id;
      bag.time_months = surv->second.first;
      bag.event = surv->second.second;
      best_volume[r.patient_id] = -1.0;
    }
    bag.instances.push_back(r.features);
    if (r.volume_mm3 > best_volume[r.patient_id]) {
      best_volume[r.patient_id] = r.volume_mm3;
      bag.largest_index = static_cast<int>(bag.instances.size()) - 1;
    }
  }
  std::vector<PatientBag> bags;
  bags.reserve(by_patient.size());
  for (auto& [id, bag] : by_patient) bags.push_back(std::move(bag));
  return bags;
}

}  // namespace crlm::surv
