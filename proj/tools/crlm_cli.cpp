// crlm: liver-tumor prompt-propagation segmentation, radiomics features,
// multiple-instance survival training, and the evaluation battery.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crlm/common.hpp"
#include "crlm/components.hpp"
#include "crlm/csv.hpp"
#include "crlm/metrics.hpp"
#include "crlm/nrrd.hpp"
#include "crlm/pipeline.hpp"
#include "crlm/radiomics.hpp"
#include "crlm/samonai.hpp"
#include "crlm/survmodel.hpp"
#include "crlm/survnet.hpp"
#include "crlm/survstats.hpp"
#include "crlm/survtrain.hpp"
#include "crlm/volume.hpp"

namespace {

using namespace crlm;

struct SamonaiArgs {
  std::string image, seeds, out;
  std::string weights = "1,1,2";
  double oracle_tolerance = 0.0;
  int threads = 1;
};

samonai::CriterionWeights parse_weights(const std::string& s) {
  double a = 0, b = 0, g = 0;
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &a, &b, &g) != 3)
    throw DataError("--weights expects a,b,g");
  return samonai::CriterionWeights{a, b, g};
}

int run_samonai(const SamonaiArgs& args) {
  const auto vol = nrrd::read_volume(args.image);
  const auto seeds = pipeline::read_seeds(args.seeds);
  samonai::PropagateConfig cfg;
  cfg.weights = parse_weights(args.weights);
  cfg.threads = args.threads;
  const samonai::RegionGrowSegmenter segmenter(args.oracle_tolerance);
  const auto results = samonai::propagate(vol, seeds, segmenter, cfg);
  int failures = 0;
  for (const auto& r : results) {
    if (r.ok) {
      size_t voxels = 0;
      for (uint8_t v : r.mask.data()) voxels += v != 0;
      std::cout << "object label " << r.label << ": " << voxels
                << " voxels, T_L = " << r.fused.threshold << "\n";
    } else {
      ++failures;
      std::cout << "object label " << r.label << ": FAILED (" << r.failure
                << ")\n";
    }
  }
  std::vector<uint8_t> declared;
  for (const auto& s : seeds) declared.push_back(static_cast<uint8_t>(s.label));
  std::sort(declared.begin(), declared.end());
  declared.erase(std::unique(declared.begin(), declared.end()), declared.end());
  nrrd::write_mask(args.out, samonai::merge_masks(results, vol, declared));
  std::cout << "wrote " << args.out << " (" << results.size() - failures << "/"
            << results.size() << " objects)\n";
  return 0;
}

struct FeatureArgs {
  std::string image, mask, out;
  std::string patient_id = "patient";
  std::string phase = "post";
  int label = 2;
  double min_diameter = -1.0;
  bool append = false;
};

int run_features(const FeatureArgs& args) {
  const auto vol = nrrd::read_volume(args.image);
  auto mask = nrrd::read_mask(args.mask,
                              {static_cast<uint8_t>(args.label)});
  if (!vol.same_grid(mask))
    throw DataError("image and mask grids do not match");
  radiomics::phase_from_string(args.phase);

  const auto comps =
      connected_components(mask, static_cast<uint8_t>(args.label));
  csv::FeatureTable table;
  table.feature_names = radiomics::first_order_feature_names();
  int dropped = 0, tiny = 0;
  for (size_t i = 0; i < comps.components.size(); ++i) {
    const auto& comp = comps.components[i];
    if (args.min_diameter >= 0.0 &&
        comp.longest_diameter_mm <= args.min_diameter) {
      ++tiny;
      continue;
    }
    const auto features = radiomics::extract_first_order(vol, comp);
    if (!features) {
      ++dropped;
      log_info("component " + std::to_string(i) +
               " emptied by outlier exclusion, dropped");
      continue;
    }
    radiomics::TumorRecord rec;
    rec.patient_id = args.patient_id;
    rec.tumor_id = "t" + std::to_string(i);
    rec.phase = radiomics::phase_from_string(args.phase);
    rec.features = *features;
    table.records.push_back(std::move(rec));
  }
  csv::write_features(args.out, table, args.append);
  std::cout << "wrote " << table.records.size() << " tumor rows to "
            << args.out;
  if (tiny) std::cout << " (" << tiny << " below the diameter threshold)";
  if (dropped) std::cout << " (" << dropped << " dropped)";
  std::cout << "\n";
  return 0;
}

struct SurvTrainArgs {
  std::string features, survival, out;
  std::string pool = "lse";
  std::string phase = "all";
  int folds = 3;
  int repeats = 15;
  int epochs = 250;
  double learning_rate = 4e-4;
  double weight_decay = 1e-3;
  double dropout = 0.2;
  uint64_t seed = 42;
  int threads = 1;
};

csv::FeatureTable filter_phase(csv::FeatureTable table,
                               const std::string& phase) {
  if (phase == "all") return table;
  const auto ph = radiomics::phase_from_string(phase);
  std::vector<radiomics::TumorRecord> kept;
  for (auto& r : table.records)
    if (r.phase == ph) kept.push_back(std::move(r));
  table.records = std::move(kept);
  if (table.records.empty())
    throw DataError("no tumor rows for phase " + phase);
  return table;
}

int run_surv_train(const SurvTrainArgs& args) {
  const auto table = filter_phase(csv::read_features(args.features), args.phase);
  const auto survival = csv::read_survival(args.survival);

  if (args.folds >= 2 && args.repeats >= 1) {
    pipeline::PipelineConfig cfg;
    cfg.seed = args.seed;
    cfg.folds = args.folds;
    cfg.repeats = args.repeats;
    cfg.pool = args.pool;
    cfg.epochs = args.epochs;
    cfg.learning_rate = args.learning_rate;
    cfg.weight_decay = args.weight_decay;
    cfg.dropout = args.dropout;
    cfg.threads = args.threads;
    const auto man = pipeline::run_cv(cfg, table, survival);
    for (size_t r = 0; r < man.repeats.size(); ++r)
      std::cout << "repeat " << r
                << ": C-index = " << man.repeats[r].pooled_cindex << "\n";
    std::cout << "cv C-index mean = " << man.cindex_mean
              << ", std = " << man.cindex_std << "\n";
  } else {
    std::cout << "cross-validation skipped\n";
  }

  // final model on the full table
  std::map<std::string, std::pair<double, int>> lookup;
  for (const auto& [id, rec] : survival)
    lookup[id] = {rec.time_months, rec.event};
  for (const auto& r : table.records)
    if (!lookup.count(r.patient_id))
      throw DataError("patient " + r.patient_id + " has no survival record");

  radiomics::FeatureMatrix m;
  m.columns = table.feature_names;
  for (const auto& r : table.records) m.rows.push_back(r.features);
  const auto norm = radiomics::fit_normalizer(m);
  const auto normalized = radiomics::apply_normalizer(m, norm);

  std::vector<radiomics::TumorRecord> rows = table.records;
  for (size_t i = 0; i < rows.size(); ++i)
    rows[i].features = normalized.rows[i];

  surv::TrainConfig tc;
  tc.epochs = args.epochs;
  tc.learning_rate = args.learning_rate;
  tc.weight_decay = args.weight_decay;
  tc.dropout = args.dropout;
  tc.pool = surv::pool_from_string(args.pool);
  tc.seed = derive_seed(args.seed, RngStream::TrainRun, 0xf1a1);

  // phase "all" trains one bag per patient over every row
  std::vector<surv::PatientBag> bags;
  if (args.phase == "all") {
    std::map<std::string, surv::PatientBag> by_patient;
    std::map<std::string, double> best_vol;
    for (const auto& r : rows) {
      auto& bag = by_patient[r.patient_id];
      if (bag.instances.empty()) {
        bag.patient_id = r.patient_id;
        bag.time_months = lookup.at(r.patient_id).first;
        bag.event = lookup.at(r.patient_id).second;
        best_vol[r.patient_id] = -1.0;
      }
      bag.instances.push_back(r.features);
      if (r.volume_mm3 > best_vol[r.patient_id]) {
        best_vol[r.patient_id] = r.volume_mm3;
        bag.largest_index = static_cast<int>(bag.instances.size()) - 1;
      }
    }
    for (auto& [id, bag] : by_patient) bags.push_back(std::move(bag));
  } else {
    bags = surv::build_bags(rows, lookup,
                            radiomics::phase_from_string(args.phase));
  }

  surv::Model model;
  model.net = surv::train(bags, static_cast<int>(table.feature_names.size()),
                          tc, nullptr);
  model.normalizer = norm;
  model.pool = tc.pool;
  model.seed = args.seed;
  model.phase = args.phase;
  surv::save_model(args.out, model);
  std::cout << "wrote model to " << args.out << "\n";
  return 0;
}

struct SurvPredictArgs {
  std::string model, features, out;
};

int run_surv_predict(const SurvPredictArgs& args) {
  const auto model = surv::load_model(args.model);
  const auto table =
      filter_phase(csv::read_features(args.features), model.phase);
  if (table.feature_names != model.normalizer.columns)
    throw DataError("feature columns do not match the model");

  radiomics::FeatureMatrix m;
  m.columns = table.feature_names;
  for (const auto& r : table.records) m.rows.push_back(r.features);
  const auto normalized = radiomics::apply_normalizer(m, model.normalizer);

  std::map<std::string, surv::PatientBag> by_patient;
  std::map<std::string, double> best_vol;
  for (size_t i = 0; i < table.records.size(); ++i) {
    const auto& r = table.records[i];
    auto& bag = by_patient[r.patient_id];
    if (bag.instances.empty()) {
      bag.patient_id = r.patient_id;
      best_vol[r.patient_id] = -1.0;
    }
    bag.instances.push_back(normalized.rows[i]);
    if (r.volume_mm3 > best_vol[r.patient_id]) {
      best_vol[r.patient_id] = r.volume_mm3;
      bag.largest_index = static_cast<int>(bag.instances.size()) - 1;
    }
  }
  std::map<std::string, double> hazards;
  for (const auto& [id, bag] : by_patient)
    hazards[id] = surv::forward_bag(model.net, bag, model.pool).patient_hazard;
  csv::write_hazards(args.out, hazards);
  std::cout << "wrote hazards for " << hazards.size() << " patients to "
            << args.out << "\n";
  return 0;
}

struct EvalMaskArgs {
  std::string pred, gt, labels;
  std::string detect_class = "tumor";
};

int run_eval_dice(const EvalMaskArgs& args) {
  const auto label_map = pipeline::read_label_map(args.labels);
  std::vector<uint8_t> declared;
  for (const auto& [name, value] : label_map) declared.push_back(value);
  const auto pred = nrrd::read_mask(args.pred, declared);
  const auto gt = nrrd::read_mask(args.gt, declared);
  for (const auto& [name, value] : label_map)
    std::cout << "dice " << name << " = "
              << metrics::dice(pred, gt, value) << "\n";
  return 0;
}

int run_eval_detect(const EvalMaskArgs& args) {
  const auto label_map = pipeline::read_label_map(args.labels);
  const auto it = label_map.find(args.detect_class);
  if (it == label_map.end())
    throw DataError("class " + args.detect_class + " not in the label map");
  std::vector<uint8_t> declared;
  for (const auto& [name, value] : label_map) declared.push_back(value);
  const auto pred = nrrd::read_mask(args.pred, declared);
  const auto gt = nrrd::read_mask(args.gt, declared);
  const auto report = metrics::match_detections(
      connected_components(pred, it->second),
      connected_components(gt, it->second));
  std::cout << "TP = " << report.tp << ", FP = " << report.fp
            << ", FN = " << report.fn << "\n";
  std::cout << "precision = " << report.precision
            << ", recall = " << report.recall << ", F1 = " << report.f1
            << "\n";
  for (const auto& m : report.matches)
    std::cout << "  gt " << m.gt_index << " <-> pred " << m.pred_index
              << " (dice " << m.dice << ")\n";
  return 0;
}

struct EvalSurvArgs {
  std::string hazards, survival, out;
  bool half_credit_ties = false;
};

int run_eval_cindex(const EvalSurvArgs& args) {
  const auto hazards = csv::read_hazards(args.hazards);
  const auto survival = csv::read_survival(args.survival);
  std::vector<double> t, h;
  std::vector<int> e;
  for (const auto& [id, hz] : hazards) {
    const auto it = survival.find(id);
    if (it == survival.end())
      throw DataError("patient " + id + " has a hazard but no survival row");
    t.push_back(it->second.time_months);
    e.push_back(it->second.event);
    h.push_back(hz);
  }
  std::cout << "C-index = " << stats::c_index(t, e, h, args.half_credit_ties)
            << " (" << t.size() << " patients)\n";
  return 0;
}

int run_eval_km(const EvalSurvArgs& args) {
  const auto hazards = csv::read_hazards(args.hazards);
  const auto survival = csv::read_survival(args.survival);
  std::map<std::string, std::pair<double, int>> lookup;
  for (const auto& [id, rec] : survival)
    lookup[id] = {rec.time_months, rec.event};
  std::ofstream out(args.out);
  if (!out) throw DataError(args.out + ": cannot open for writing");
  const auto lr = pipeline::write_km_curve(out, hazards, lookup);
  std::cout << "wrote " << args.out << "\n";
  if (lr)
    std::cout << "log-rank chi2 = " << lr->chi2 << ", p = " << lr->p << "\n";
  return 0;
}

int run_eval_randtest(const std::string& config_path) {
  auto cfg = pipeline::load_config(config_path);
  if (cfg.randomization_rounds <= 0)
    throw DataError("randomization_rounds must be > 0 for eval randtest");
  if (cfg.paths.features.empty() || cfg.paths.survival.empty())
    throw DataError("config needs paths.features and paths.survival");
  const auto table = csv::read_features(cfg.paths.features);
  const auto survival = csv::read_survival(cfg.paths.survival);
  const auto man = pipeline::run_cv(cfg, table, survival);
  std::cout << "observed mean C-index = " << man.cindex_mean << "\n";
  std::cout << "null replicates = " << man.null_scores.size() << "\n";
  std::cout << "empirical p = " << man.randomization_p << "\n";
  if (!cfg.paths.out_dir.empty()) {
    pipeline::emit_results(man, cfg.paths.out_dir);
    std::cout << "results written to " << cfg.paths.out_dir << "\n";
  }
  return 0;
}

int run_pipeline(const std::string& config_path) {
  auto cfg = pipeline::load_config(config_path);
  if (cfg.paths.out_dir.empty())
    throw DataError("config needs paths.out_dir");
  namespace fs = std::filesystem;

  if (!cfg.paths.image.empty() && !cfg.paths.seeds.empty()) {
    const auto vol = nrrd::read_volume(cfg.paths.image);
    const auto seeds = pipeline::read_seeds(cfg.paths.seeds);
    std::optional<Mask3D> gt;
    if (!cfg.paths.gt_mask.empty())
      gt = nrrd::read_mask(cfg.paths.gt_mask,
                           {static_cast<uint8_t>(cfg.paths.organ_label),
                            static_cast<uint8_t>(cfg.paths.tumor_label), 3});
    const auto seg = pipeline::run_segmentation(cfg, vol, seeds,
                                                gt ? &*gt : nullptr);
    fs::create_directories(cfg.paths.out_dir);
    const auto mask_path = fs::path(cfg.paths.out_dir) / "segmentation.nrrd";
    nrrd::write_mask(mask_path.string(), seg.mask);
    std::cout << "segmentation written to " << mask_path.string() << "\n";
    for (const auto& [label, d] : seg.dice_per_label)
      std::cout << "dice label " << label << " = " << d << "\n";
    if (seg.detection)
      std::cout << "detection: TP = " << seg.detection->tp
                << ", FP = " << seg.detection->fp
                << ", FN = " << seg.detection->fn
                << ", F1 = " << seg.detection->f1 << "\n";
  }

  if (!cfg.paths.features.empty() && !cfg.paths.survival.empty()) {
    const auto table = csv::read_features(cfg.paths.features);
    const auto survival = csv::read_survival(cfg.paths.survival);
    const auto man = pipeline::run_cv(cfg, table, survival);
    pipeline::emit_results(man, cfg.paths.out_dir);
    std::cout << "cv C-index mean = " << man.cindex_mean
              << ", std = " << man.cindex_std << "\n";
    if (man.randomization_p_defined)
      std::cout << "randomization p = " << man.randomization_p << "\n";
    std::cout << "results written to " << cfg.paths.out_dir << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"liver-tumor segmentation prompting and survival analysis"};
  app.require_subcommand(1);

  SamonaiArgs sam;
  auto* sam_cmd = app.add_subcommand(
      "samonai", "3D prompt propagation from point seeds");
  sam_cmd->add_option("--image", sam.image, "input volume (.nrrd)")
      ->required();
  sam_cmd->add_option("--seeds", sam.seeds, "seed objects (.json)")
      ->required();
  sam_cmd->add_option("--out", sam.out, "output mask (.nrrd)")->required();
  sam_cmd->add_option("--weights", sam.weights,
                      "criterion weights alpha,beta,gamma");
  sam_cmd->add_option("--oracle-tolerance", sam.oracle_tolerance,
                      "region-growing intensity tolerance");
  sam_cmd->add_option("--threads", sam.threads, "worker threads");

  FeatureArgs feat;
  auto* feat_cmd = app.add_subcommand(
      "features", "first-order radiomics per tumor component");
  feat_cmd->add_option("--image", feat.image, "input volume")->required();
  feat_cmd->add_option("--mask", feat.mask, "label mask")->required();
  feat_cmd->add_option("--out", feat.out, "output feature CSV")->required();
  feat_cmd->add_option("--label", feat.label, "tumor label value");
  feat_cmd->add_option("--patient-id", feat.patient_id, "patient id");
  feat_cmd->add_option("--phase", feat.phase, "pre or post");
  feat_cmd->add_option("--min-diameter", feat.min_diameter,
                       "drop components with diameter <= this (mm)");
  feat_cmd->add_flag("--append", feat.append, "append rows, no header");

  auto* surv_cmd = app.add_subcommand("surv", "survival model");
  surv_cmd->require_subcommand(1);
  SurvTrainArgs st;
  auto* train_cmd =
      surv_cmd->add_subcommand("train", "cross-validate and fit a model");
  train_cmd->add_option("--features", st.features, "feature CSV")->required();
  train_cmd->add_option("--survival", st.survival, "survival CSV")
      ->required();
  train_cmd->add_option("--out", st.out, "output model JSON")->required();
  train_cmd->add_option("--pool", st.pool, "mean|largest|max|lse");
  train_cmd->add_option("--phase", st.phase, "pre|post|all");
  train_cmd->add_option("--folds", st.folds, "CV folds (0 skips CV)");
  train_cmd->add_option("--repeats", st.repeats, "CV repeats (0 skips CV)");
  train_cmd->add_option("--epochs", st.epochs, "training epochs");
  train_cmd->add_option("--lr", st.learning_rate, "learning rate");
  train_cmd->add_option("--weight-decay", st.weight_decay, "weight decay");
  train_cmd->add_option("--dropout", st.dropout, "dropout rate");
  train_cmd->add_option("--seed", st.seed, "base seed");
  train_cmd->add_option("--threads", st.threads, "worker threads");

  SurvPredictArgs sp;
  auto* predict_cmd =
      surv_cmd->add_subcommand("predict", "hazards from a trained model");
  predict_cmd->add_option("--model", sp.model, "model JSON")->required();
  predict_cmd->add_option("--features", sp.features, "feature CSV")
      ->required();
  predict_cmd->add_option("--out", sp.out, "output hazards CSV")->required();

  auto* eval_cmd = app.add_subcommand("eval", "metrics and statistics");
  eval_cmd->require_subcommand(1);

  EvalMaskArgs ed;
  auto* dice_cmd = eval_cmd->add_subcommand("dice", "per-class dice");
  dice_cmd->add_option("--pred", ed.pred, "predicted mask")->required();
  dice_cmd->add_option("--gt", ed.gt, "ground-truth mask")->required();
  dice_cmd->add_option("--labels", ed.labels, "label map JSON")->required();

  EvalMaskArgs edet;
  auto* detect_cmd =
      eval_cmd->add_subcommand("detect", "one-to-one tumor detection");
  detect_cmd->add_option("--pred", edet.pred, "predicted mask")->required();
  detect_cmd->add_option("--gt", edet.gt, "ground-truth mask")->required();
  detect_cmd->add_option("--labels", edet.labels, "label map JSON")
      ->required();
  detect_cmd->add_option("--class", edet.detect_class,
                         "label-map entry to detect");

  EvalSurvArgs ec;
  auto* cindex_cmd = eval_cmd->add_subcommand("cindex", "concordance index");
  cindex_cmd->add_option("--hazards", ec.hazards, "hazards CSV")->required();
  cindex_cmd->add_option("--survival", ec.survival, "survival CSV")
      ->required();
  cindex_cmd->add_flag("--half-credit-ties", ec.half_credit_ties,
                       "score hazard ties 0.5 instead of 0");

  EvalSurvArgs ek;
  auto* km_cmd =
      eval_cmd->add_subcommand("km", "median-dichotomized KM curves");
  km_cmd->add_option("--hazards", ek.hazards, "hazards CSV")->required();
  km_cmd->add_option("--survival", ek.survival, "survival CSV")->required();
  km_cmd->add_option("--out", ek.out, "output curve CSV")->required();

  std::string randtest_config;
  auto* rand_cmd =
      eval_cmd->add_subcommand("randtest", "label-shuffling null test");
  rand_cmd->add_option("--config", randtest_config, "pipeline config JSON")
      ->required();

  std::string pipeline_config;
  auto* pipe_cmd = app.add_subcommand("pipeline", "end-to-end runs");
  pipe_cmd->require_subcommand(1);
  auto* pipe_run = pipe_cmd->add_subcommand("run", "run the configured stages");
  pipe_run->add_option("--config", pipeline_config, "pipeline config JSON")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sam_cmd->parsed()) return run_samonai(sam);
    if (feat_cmd->parsed()) return run_features(feat);
    if (surv_cmd->parsed()) {
      if (train_cmd->parsed()) return run_surv_train(st);
      if (predict_cmd->parsed()) return run_surv_predict(sp);
    }
    if (eval_cmd->parsed()) {
      if (dice_cmd->parsed()) return run_eval_dice(ed);
      if (detect_cmd->parsed()) return run_eval_detect(edet);
      if (cindex_cmd->parsed()) return run_eval_cindex(ec);
      if (km_cmd->parsed()) return run_eval_km(ek);
      if (rand_cmd->parsed()) return run_eval_randtest(randtest_config);
    }
    if (pipe_cmd->parsed() && pipe_run->parsed())
      return run_pipeline(pipeline_config);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
