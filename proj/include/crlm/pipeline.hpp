#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "crlm/common.hpp"
#include "crlm/components.hpp"
#include "crlm/csv.hpp"
#include "crlm/metrics.hpp"
#include "crlm/radiomics.hpp"
#include "crlm/rng.hpp"
#include "crlm/samonai.hpp"
#include "crlm/survnet.hpp"
#include "crlm/survstats.hpp"
#include "crlm/survtrain.hpp"
#include "crlm/volume.hpp"

namespace crlm::pipeline {

// ---- configuration ----

struct PipelineConfig {
  uint64_t seed = 42;
  int folds = 3;
  int repeats = 15;
  std::string pool = "lse";
  int epochs = 250;
  double learning_rate = 4e-4;
  double weight_decay = 1e-3;
  double dropout = 0.2;
  std::vector<int> encoder = {64, 32, 16};
  std::vector<int> regressor = {8};
  std::array<double, 3> samonai_weights = {1.0, 1.0, 2.0};
  double oracle_tolerance = 0.0;
  double min_tumor_volume_mm3 = 100.0;
  double diameter_percentile = 1.0;
  bool stratified_folds = false;
  bool half_credit_ties = false;
  int randomization_rounds = 0;
  int threads = 1;

  struct Paths {
    std::string features, survival, out_dir;
    std::string image, seeds, gt_mask;
    int organ_label = 1;
    int tumor_label = 2;
  } paths;

  void validate() const {
    if (folds < 2) throw DataError("folds must be >= 2");
    if (repeats < 1) throw DataError("repeats must be >= 1");
    if (epochs < 0) throw DataError("epochs must be >= 0");
    if (!(learning_rate > 0)) throw DataError("learning_rate must be > 0");
    if (weight_decay < 0) throw DataError("weight_decay must be >= 0");
    if (dropout < 0 || dropout >= 1) throw DataError("dropout must be in [0,1)");
    if (min_tumor_volume_mm3 < 0)
      throw DataError("min_tumor_volume_mm3 must be >= 0");
    if (diameter_percentile < 0 || diameter_percentile > 100)
      throw DataError("diameter_percentile must be in [0,100]");
    if (randomization_rounds < 0)
      throw DataError("randomization_rounds must be >= 0");
    if (threads < 0) throw DataError("threads must be >= 0");
    surv::pool_from_string(pool);
  }
};

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["folds"] = c.folds;
  j["repeats"] = c.repeats;
  j["pool"] = c.pool;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["dropout"] = c.dropout;
  j["encoder"] = c.encoder;
  j["regressor"] = c.regressor;
  j["samonai_weights"] = c.samonai_weights;
  j["oracle_tolerance"] = c.oracle_tolerance;
  j["min_tumor_volume_mm3"] = c.min_tumor_volume_mm3;
  j["diameter_percentile"] = c.diameter_percentile;
  j["stratified_folds"] = c.stratified_folds;
  j["half_credit_ties"] = c.half_credit_ties;
  j["randomization_rounds"] = c.randomization_rounds;
  j["threads"] = c.threads;
  j["paths"] = {{"features", c.paths.features},
                {"survival", c.paths.survival},
                {"out_dir", c.paths.out_dir},
                {"image", c.paths.image},
                {"seeds", c.paths.seeds},
                {"gt_mask", c.paths.gt_mask},
                {"organ_label", c.paths.organ_label},
                {"tumor_label", c.paths.tumor_label}};
  return j;
}

// Absent keys keep their defaults; the full config is re-emitted into the
// manifest so results never depend on silent defaults.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.folds = j.value("folds", c.folds);
  c.repeats = j.value("repeats", c.repeats);
  c.pool = j.value("pool", c.pool);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout = j.value("dropout", c.dropout);
  c.encoder = j.value("encoder", c.encoder);
  c.regressor = j.value("regressor", c.regressor);
  if (j.contains("samonai_weights")) {
    const auto w = j["samonai_weights"].get<std::vector<double>>();
    if (w.size() != 3) throw DataError("samonai_weights needs 3 entries");
    c.samonai_weights = {w[0], w[1], w[2]};
  }
  c.oracle_tolerance = j.value("oracle_tolerance", c.oracle_tolerance);
  c.min_tumor_volume_mm3 =
      j.value("min_tumor_volume_mm3", c.min_tumor_volume_mm3);
  c.diameter_percentile = j.value("diameter_percentile", c.diameter_percentile);
  c.stratified_folds = j.value("stratified_folds", c.stratified_folds);
  c.half_credit_ties = j.value("half_credit_ties", c.half_credit_ties);
  c.randomization_rounds =
      j.value("randomization_rounds", c.randomization_rounds);
  c.threads = j.value("threads", c.threads);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    c.paths.features = p.value("features", c.paths.features);
    c.paths.survival = p.value("survival", c.paths.survival);
    c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
    c.paths.image = p.value("image", c.paths.image);
    c.paths.seeds = p.value("seeds", c.paths.seeds);
    c.paths.gt_mask = p.value("gt_mask", c.paths.gt_mask);
    c.paths.organ_label = p.value("organ_label", c.paths.organ_label);
    c.paths.tumor_label = p.value("tumor_label", c.paths.tumor_label);
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad JSON: " + e.what());
  }
  auto c = config_from_json(j);
  c.validate();
  return c;
}

// ---- seeds and label maps ----

inline std::vector<samonai::SeedObject> read_seeds(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad JSON: " + e.what());
  }
  if (!j.is_array()) throw DataError(path + ": expected a JSON array");
  std::vector<samonai::SeedObject> seeds;
  for (const auto& o : j) {
    samonai::SeedObject s;
    s.label = o.value("label", 1);
    s.view = view_from_string(o.value("view", std::string("axial")));
    if (!o.contains("positive"))
      throw DataError(path + ": object without positive points");
    for (const auto& p : o["positive"]) {
      const auto v = p.get<std::vector<int>>();
      if (v.size() != 3) throw DataError(path + ": point needs 3 coords");
      s.positives.push_back({v[0], v[1], v[2]});
    }
    if (o.contains("negative"))
      for (const auto& p : o["negative"]) {
        const auto v = p.get<std::vector<int>>();
        if (v.size() != 3) throw DataError(path + ": point needs 3 coords");
        s.negatives.push_back({v[0], v[1], v[2]});
      }
    if (s.positives.empty())
      throw DataError(path + ": object without positive points");
    seeds.push_back(std::move(s));
  }
  if (seeds.empty()) throw DataError(path + ": no seed objects");
  return seeds;
}

inline std::map<std::string, uint8_t> read_label_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad JSON: " + e.what());
  }
  std::map<std::string, uint8_t> labels;
  for (const auto& [k, v] : j.items())
    labels[k] = static_cast<uint8_t>(v.get<int>());
  if (labels.empty()) throw DataError(path + ": empty label map");
  return labels;
}

// ---- cross-validated survival run ----

struct RepeatResult {
  std::map<std::string, int> fold_of_patient;
  std::vector<double> per_fold_cindex;  // NaN when a fold has no usable pairs
  double pooled_cindex = 0.0;
  std::map<std::string, double> heldout_hazards;
};

struct RunManifest {
  PipelineConfig config;
  std::vector<std::string> patients;
  std::vector<std::string> excluded_patients;  // survival but no tumors
  std::map<std::string, std::pair<double, int>> survival;  // time, event
  std::vector<RepeatResult> repeats;
  double cindex_mean = 0.0;
  double cindex_std = 0.0;
  std::map<std::string, double> mean_hazards;
  std::vector<double> null_scores;
  double randomization_p = std::numeric_limits<double>::quiet_NaN();
  bool randomization_p_defined = false;
  std::string tool_version = kToolVersion;
  double wall_clock_seconds = 0.0;
};

namespace detail {

// Patient-level fold partition: shuffle then deal round-robin, optionally
// within each event group (stratified switch).
inline std::map<std::string, int> assign_folds(
    const std::vector<std::string>& patients,
    const std::map<std::string, std::pair<double, int>>& survival, int folds,
    bool stratified, uint64_t seed) {
  std::map<std::string, int> fold_of;
  if (stratified) {
    std::vector<std::string> ev, cens;
    for (const auto& p : patients)
      (survival.at(p).second == 1 ? ev : cens).push_back(p);
    Rng rng(seed);
    rng.shuffle(ev);
    rng.shuffle(cens);
    int next = 0;
    for (const auto& p : ev) fold_of[p] = next++ % folds;
    for (const auto& p : cens) fold_of[p] = next++ % folds;
  } else {
    std::vector<std::string> order = patients;
    Rng rng(seed);
    rng.shuffle(order);
    for (size_t i = 0; i < order.size(); ++i)
      fold_of[order[i]] = static_cast<int>(i) % folds;
  }
  return fold_of;
}

inline radiomics::FeatureMatrix records_matrix(
    std::span<const radiomics::TumorRecord> records,
    const std::vector<std::string>& columns) {
  radiomics::FeatureMatrix m;
  m.columns = columns;
  for (const auto& r : records) m.rows.push_back(r.features);
  return m;
}

}  // namespace detail

// One repeat of k-fold CV: per phase, fit the normalizer and train on the
// k-1 training folds, predict held-out hazards, fuse phases per patient.
// Returns the repeat record plus hazards for every scored patient.
inline RepeatResult cv_single_repeat(
    const PipelineConfig& cfg, const csv::FeatureTable& features,
    const std::map<std::string, std::pair<double, int>>& survival,
    const std::vector<std::string>& patients, int repeat_index) {
  RepeatResult rr;
  rr.fold_of_patient = detail::assign_folds(
      patients, survival, cfg.folds, cfg.stratified_folds,
      derive_seed(cfg.seed, RngStream::FoldSplit,
                  static_cast<uint64_t>(repeat_index)));

  std::set<radiomics::Phase> phases;
  for (const auto& r : features.records) phases.insert(r.phase);

  surv::TrainConfig tc;
  tc.encoder = cfg.encoder;
  tc.regressor = cfg.regressor;
  tc.dropout = cfg.dropout;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.learning_rate;
  tc.weight_decay = cfg.weight_decay;
  tc.pool = surv::pool_from_string(cfg.pool);

  for (int fold = 0; fold < cfg.folds; ++fold) {
    std::map<std::string, double> fused;  // per-patient hazard, this fold
    std::map<std::string, int> n_phases;
    for (auto phase : phases) {
      std::vector<radiomics::TumorRecord> train_rows, test_rows;
      for (const auto& r : features.records) {
        if (r.phase != phase) continue;
        const auto it = rr.fold_of_patient.find(r.patient_id);
        if (it == rr.fold_of_patient.end()) continue;
        (it->second == fold ? test_rows : train_rows).push_back(r);
      }
      if (train_rows.size() < 2 || test_rows.empty()) continue;

      const auto norm = radiomics::fit_normalizer(
          detail::records_matrix(train_rows, features.feature_names));
      auto normalize = [&](std::vector<radiomics::TumorRecord> rows) {
        auto m = radiomics::apply_normalizer(
            detail::records_matrix(rows, features.feature_names), norm);
        for (size_t i = 0; i < rows.size(); ++i)
          rows[i].features = std::move(m.rows[i]);
        return rows;
      };
      train_rows = normalize(std::move(train_rows));
      test_rows = normalize(std::move(test_rows));

      auto train_bags = surv::build_bags(train_rows, survival, phase);
      bool any_event = false;
      for (const auto& b : train_bags) any_event |= (b.event == 1);
      if (!any_event)
        throw DataError("insufficient events in training folds (repeat " +
                        std::to_string(repeat_index) + ", fold " +
                        std::to_string(fold) + ")");

      tc.seed = derive_seed(
          cfg.seed, RngStream::TrainRun,
          static_cast<uint64_t>(repeat_index) * cfg.folds + fold,
          static_cast<uint64_t>(phase));
      const auto net = surv::train(train_bags,
                                   static_cast<int>(features.feature_names.size()),
                                   tc, nullptr);

      const auto test_bags = surv::build_bags(test_rows, survival, phase);
      for (const auto& bag : test_bags) {
        const double h = surv::forward_bag(net, bag, tc.pool).patient_hazard;
        auto [it, inserted] = fused.emplace(bag.patient_id, h);
        if (!inserted) it->second += h;
        n_phases[bag.patient_id] += 1;
      }
    }
    for (auto& [id, h] : fused) {
      h /= n_phases[id];  // late fusion: mean of available phase hazards
      rr.heldout_hazards[id] = h;
    }

    // per-fold diagnostic c-index
    std::vector<double> t, h;
    std::vector<int> e;
    for (const auto& [id, hz] : fused) {
      t.push_back(survival.at(id).first);
      e.push_back(survival.at(id).second);
      h.push_back(hz);
    }
    double fold_ci = std::numeric_limits<double>::quiet_NaN();
    if (!t.empty()) {
      try {
        fold_ci = stats::c_index(t, e, h, cfg.half_credit_ties);
      } catch (const DataError&) {
      }
    }
    rr.per_fold_cindex.push_back(fold_ci);
  }

  // pooled held-out c-index for the repeat
  std::vector<double> t, h;
  std::vector<int> e;
  for (const auto& [id, hz] : rr.heldout_hazards) {
    t.push_back(survival.at(id).first);
    e.push_back(survival.at(id).second);
    h.push_back(hz);
  }
  if (t.empty())
    throw DataError("no held-out predictions in repeat " +
                    std::to_string(repeat_index));
  rr.pooled_cindex = stats::c_index(t, e, h, cfg.half_credit_ties);
  return rr;
}

// Mean C-index over `repeats` independent fold partitions; the score the
// randomization test replays on shuffled labels.
inline double cv_mean_cindex(
    const PipelineConfig& cfg, const csv::FeatureTable& features,
    const std::map<std::string, std::pair<double, int>>& survival,
    const std::vector<std::string>& patients) {
  double acc = 0.0;
  for (int r = 0; r < cfg.repeats; ++r)
    acc += cv_single_repeat(cfg, features, survival, patients, r)
               .pooled_cindex;
  return acc / cfg.repeats;
}

inline RunManifest run_cv(const PipelineConfig& cfg,
                          const csv::FeatureTable& features,
                          const csv::SurvivalTable& survival_table) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunManifest man;
  man.config = cfg;

  std::map<std::string, std::pair<double, int>> survival;
  for (const auto& [id, rec] : survival_table)
    survival[id] = {rec.time_months, rec.event};

  std::set<std::string> with_tumors;
  for (const auto& r : features.records) {
    if (!survival.count(r.patient_id))
      throw DataError("patient " + r.patient_id +
                      " has tumors but no survival record");
    with_tumors.insert(r.patient_id);
  }
  for (const auto& [id, s] : survival) {
    if (with_tumors.count(id)) man.patients.push_back(id);
    else man.excluded_patients.push_back(id);  // no tumors: no hazard
  }
  if (man.patients.size() < static_cast<size_t>(cfg.folds))
    throw DataError("fewer patients than folds");
  for (const auto& id : man.patients) man.survival[id] = survival[id];
  if (!man.excluded_patients.empty())
    log_info(std::to_string(man.excluded_patients.size()) +
             " patient(s) excluded: no tumors to score");

  std::vector<double> repeat_scores;
  for (int r = 0; r < cfg.repeats; ++r) {
    man.repeats.push_back(
        cv_single_repeat(cfg, features, man.survival, man.patients, r));
    repeat_scores.push_back(man.repeats.back().pooled_cindex);
  }
  man.cindex_mean = vec_mean(repeat_scores);
  man.cindex_std = sample_std(repeat_scores);

  // hazards averaged over repeats
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& rr : man.repeats)
    for (const auto& [id, h] : rr.heldout_hazards) {
      acc[id].first += h;
      acc[id].second += 1;
    }
  for (const auto& [id, pair] : acc)
    man.mean_hazards[id] = pair.first / pair.second;

  if (cfg.randomization_rounds > 0) {
    std::vector<double> times;
    std::vector<int> events;
    for (const auto& id : man.patients) {
      times.push_back(man.survival.at(id).first);
      events.push_back(man.survival.at(id).second);
    }
    auto runner = [&](std::vector<double> t, std::vector<int> e) {
      std::map<std::string, std::pair<double, int>> shuffled;
      for (size_t i = 0; i < man.patients.size(); ++i)
        shuffled[man.patients[i]] = {t[i], e[i]};
      return cv_mean_cindex(cfg, features, shuffled, man.patients);
    };
    const auto rt = stats::randomization_test(
        runner, times, events, cfg.randomization_rounds,
        derive_seed(cfg.seed, RngStream::LabelShuffle), cfg.threads);
    man.null_scores = rt.null_scores;
    man.randomization_p = rt.p;
    man.randomization_p_defined = rt.p_defined;
  }

  man.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return man;
}

// ---- segmentation stage ----

struct SegmentationOutcome {
  Mask3D mask;
  std::vector<samonai::ObjectResult> objects;
  std::optional<metrics::DetectionReport> detection;
  std::map<int, double> dice_per_label;
};

// propagate -> drop extra-hepatic tumor voxels -> drop tiny tumor
// components -> optional evaluation against a ground-truth mask.
inline SegmentationOutcome run_segmentation(const PipelineConfig& cfg,
                                            const Volume3D& image,
                                            std::span<const samonai::SeedObject> seeds,
                                            const Mask3D* gt = nullptr) {
  samonai::PropagateConfig pc;
  pc.weights = {cfg.samonai_weights[0], cfg.samonai_weights[1],
                cfg.samonai_weights[2]};
  pc.threads = cfg.threads;
  const samonai::RegionGrowSegmenter segmenter(cfg.oracle_tolerance);

  SegmentationOutcome out;
  out.objects = samonai::propagate(image, seeds, segmenter, pc);
  for (const auto& o : out.objects)
    if (!o.ok)
      log_info("object with label " + std::to_string(o.label) +
               " failed: " + o.failure);

  std::vector<uint8_t> declared;
  for (const auto& s : seeds)
    declared.push_back(static_cast<uint8_t>(s.label));
  declared.push_back(static_cast<uint8_t>(cfg.paths.organ_label));
  declared.push_back(static_cast<uint8_t>(cfg.paths.tumor_label));
  std::sort(declared.begin(), declared.end());
  declared.erase(std::unique(declared.begin(), declared.end()),
                 declared.end());

  Mask3D merged = samonai::merge_masks(out.objects, image, declared);

  const auto tumor_label = static_cast<uint8_t>(cfg.paths.tumor_label);
  const auto organ_label = static_cast<uint8_t>(cfg.paths.organ_label);

  Mask3D tumor = Mask3D::zeros(merged.nx(), merged.ny(), merged.nz(),
                               merged.spacing(), declared);
  Mask3D organ = tumor;
  for (size_t i = 0; i < merged.size(); ++i) {
    if (merged.data()[i] == tumor_label)
      tumor.mutable_data()[i] = tumor_label;
    if (merged.data()[i] == organ_label)
      organ.mutable_data()[i] = organ_label;
  }
  // the organ reference for "extra-hepatic" is the enclosed region, not
  // the raw prediction: intensity-driven organ masks leave cavities where
  // intra-hepatic tumors sit
  organ = fill_enclosed_cavities(organ, organ_label);
  tumor = mask_outside(tumor, organ);
  tumor = remove_small_objects(tumor, tumor_label, cfg.min_tumor_volume_mm3);

  for (size_t i = 0; i < merged.size(); ++i) {
    if (merged.data()[i] == tumor_label && tumor.data()[i] == 0)
      merged.mutable_data()[i] = 0;
  }
  out.mask = std::move(merged);

  if (gt) {
    if (!gt->same_grid(out.mask))
      throw DataError("ground-truth mask grid does not match the image");
    for (uint8_t l : out.mask.declared_labels())
      out.dice_per_label[l] = metrics::dice(out.mask, *gt, l);
    const auto pred_comps = connected_components(out.mask, tumor_label);
    const auto gt_comps = connected_components(*gt, tumor_label);
    out.detection = metrics::match_detections(pred_comps, gt_comps);
  }
  return out;
}

// ---- result emission ----

inline nlohmann::json manifest_to_json(const RunManifest& man) {
  nlohmann::json j;
  j["tool_version"] = man.tool_version;
  j["config"] = config_to_json(man.config);
  j["patients"] = man.patients;
  j["excluded_patients"] = man.excluded_patients;
  nlohmann::json surv_j;
  for (const auto& [id, te] : man.survival)
    surv_j[id] = {{"time_months", te.first}, {"event", te.second}};
  j["survival"] = surv_j;
  j["repeats"] = nlohmann::json::array();
  for (const auto& rr : man.repeats) {
    nlohmann::json rj;
    rj["fold_of_patient"] = rr.fold_of_patient;
    rj["per_fold_cindex"] = rr.per_fold_cindex;
    rj["pooled_cindex"] = rr.pooled_cindex;
    rj["heldout_hazards"] = rr.heldout_hazards;
    j["repeats"].push_back(rj);
  }
  j["cindex_mean"] = man.cindex_mean;
  j["cindex_std"] = man.cindex_std;
  j["mean_hazards"] = man.mean_hazards;
  j["null_scores"] = man.null_scores;
  if (man.randomization_p_defined) j["randomization_p"] = man.randomization_p;
  j["wall_clock_seconds"] = man.wall_clock_seconds;
  return j;
}

// Median-dichotomized KM curves as a plot-ready CSV. Rows are the union
// of distinct observed times; S columns are the step functions evaluated
// at each row's time; at-risk counts are subjects with T >= t per group.
// Returns the log-rank comparison when both groups are populated.
inline std::optional<stats::LogRankResult> write_km_curve(
    std::ostream& out, const std::map<std::string, double>& hazards,
    const std::map<std::string, std::pair<double, int>>& survival) {
  out << "time,S_low,S_high,n_risk_low,n_risk_high\n";
  if (hazards.size() < 2) return std::nullopt;

  std::vector<std::string> ids;
  std::vector<double> h;
  for (const auto& [id, hz] : hazards) {
    if (!survival.count(id))
      throw DataError("patient " + id + " has a hazard but no survival row");
    ids.push_back(id);
    h.push_back(hz);
  }
  const auto strat = stats::stratify(h);
  std::vector<double> t_low, t_high, all_times;
  std::vector<int> e_low, e_high;
  for (size_t i = 0; i < ids.size(); ++i) {
    const auto& te = survival.at(ids[i]);
    all_times.push_back(te.first);
    if (strat.group[i] == 1) {
      t_high.push_back(te.first);
      e_high.push_back(te.second);
    } else {
      t_low.push_back(te.first);
      e_low.push_back(te.second);
    }
  }
  std::sort(all_times.begin(), all_times.end());
  all_times.erase(std::unique(all_times.begin(), all_times.end()),
                  all_times.end());
  std::optional<stats::SurvivalCurve> km_low, km_high;
  if (!t_low.empty()) km_low = stats::kaplan_meier(t_low, e_low, "low");
  if (!t_high.empty()) km_high = stats::kaplan_meier(t_high, e_high, "high");
  auto at_risk = [](const std::vector<double>& ts, double t) {
    int n = 0;
    for (double x : ts)
      if (x >= t) ++n;
    return n;
  };
  for (double t : all_times) {
    const double s_low = km_low ? stats::km_survival_at(*km_low, t) : 1.0;
    const double s_high = km_high ? stats::km_survival_at(*km_high, t) : 1.0;
    out << csv::format_double(t) << "," << csv::format_double(s_low) << ","
        << csv::format_double(s_high) << "," << at_risk(t_low, t) << ","
        << at_risk(t_high, t) << "\n";
  }
  if (!t_low.empty() && !t_high.empty())
    return stats::log_rank(t_low, e_low, t_high, e_high);
  return std::nullopt;
}

// Writes manifest.json, hazards.csv, km_curve.csv and
// null_distribution.csv; all byte-stable functions of the manifest.
inline void emit_results(const RunManifest& man, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw DataError(out_dir + ": cannot write manifest.json");
    out << manifest_to_json(man).dump(2) << "\n";
  }

  csv::write_hazards((fs::path(out_dir) / "hazards.csv").string(),
                     man.mean_hazards);

  {
    std::ofstream out(fs::path(out_dir) / "km_curve.csv");
    if (!out) throw DataError(out_dir + ": cannot write km_curve.csv");
    write_km_curve(out, man.mean_hazards, man.survival);
  }

  {
    std::ofstream out(fs::path(out_dir) / "null_distribution.csv");
    if (!out)
      throw DataError(out_dir + ": cannot write null_distribution.csv");
    out << "null_cindex\n";
    for (double s : man.null_scores) out << csv::format_double(s) << "\n";
  }
}

}  // namespace crlm::pipeline
