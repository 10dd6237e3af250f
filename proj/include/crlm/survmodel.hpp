#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crlm/common.hpp"
#include "crlm/radiomics.hpp"
#include "crlm/survnet.hpp"
#include "crlm/survtrain.hpp"

namespace crlm::surv {

// Trained model bundle: network shapes and flat weights, the frozen
// normalization state, pooling mode and seed. JSON round-trips doubles
// exactly (shortest round-trip representation).

struct Model {
  Network net;
  radiomics::NormalizerState normalizer;
  PoolMode pool = PoolMode::Lse;
  uint64_t seed = 0;
  std::string phase = "all";  // "pre", "post" or "all"
};

inline nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j;
  j["format"] = "crlm-surv-model";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["pool"] = pool_name(m.pool);
  j["phase"] = m.phase;
  j["input_dim"] = m.net.config().input_dim;
  j["encoder"] = m.net.config().encoder;
  j["regressor"] = m.net.config().regressor;
  j["dropout"] = m.net.config().dropout;
  j["params"] = m.net.params();
  j["normalizer"] = {
      {"columns", m.normalizer.columns},   {"min", m.normalizer.col_min},
      {"median_shift", m.normalizer.med_shift}, {"mu", m.normalizer.mu},
      {"sigma", m.normalizer.sigma},       {"epsilon", m.normalizer.epsilon}};
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j["format"] != "crlm-surv-model")
    throw DataError("not a crlm survival model file");
  Model m;
  m.seed = j["seed"].get<uint64_t>();
  m.pool = pool_from_string(j["pool"].get<std::string>());
  m.phase = j.value("phase", std::string("all"));
  NetConfig nc;
  nc.input_dim = j["input_dim"].get<int>();
  nc.encoder = j["encoder"].get<std::vector<int>>();
  nc.regressor = j["regressor"].get<std::vector<int>>();
  nc.dropout = j["dropout"].get<double>();
  m.net = Network::init(nc, 0);
  auto params = j["params"].get<std::vector<double>>();
  if (params.size() != m.net.param_count())
    throw DataError("model parameter count does not match layer shapes");
  m.net.params() = std::move(params);
  const auto& n = j["normalizer"];
  m.normalizer.columns = n["columns"].get<std::vector<std::string>>();
  m.normalizer.col_min = n["min"].get<std::vector<double>>();
  m.normalizer.med_shift = n["median_shift"].get<std::vector<double>>();
  m.normalizer.mu = n["mu"].get<std::vector<double>>();
  m.normalizer.sigma = n["sigma"].get<std::vector<double>>();
  m.normalizer.epsilon = n["epsilon"].get<double>();
  return m;
}

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << model_to_json(m).dump(2) << "\n";
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace crlm::surv
