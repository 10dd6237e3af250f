#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/radiomics.hpp"

namespace crlm::csv {

// Plain comma-separated files, no quoting; all numerics decimal with dot
// separator, written in shortest round-trip form.

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    throw DataError(context + ": bad numeric value '" + s + "'");
  return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

// ---- survival table: patient_id,time_months,event ----

struct SurvivalRecord {
  double time_months = 0.0;
  int event = 0;  // 1 = observed, 0 = censored
};

using SurvivalTable = std::map<std::string, SurvivalRecord>;

inline SurvivalTable read_survival(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_line(line);
  if (header.size() != 3 || header[0] != "patient_id" ||
      header[1] != "time_months" || header[2] != "event")
    throw DataError(path + ": expected header patient_id,time_months,event");
  SurvivalTable table;
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 3)
      throw DataError(path + ": wrong field count at row " +
                      std::to_string(row));
    SurvivalRecord rec;
    rec.time_months = parse_double(f[1], path);
    const double ev = parse_double(f[2], path);
    if (ev != 0.0 && ev != 1.0)
      throw DataError(path + ": event must be 0 or 1 at row " +
                      std::to_string(row));
    rec.event = static_cast<int>(ev);
    if (!(rec.time_months > 0.0))
      throw DataError(path + ": time_months must be positive at row " +
                      std::to_string(row));
    if (!table.emplace(f[0], rec).second)
      throw DataError(path + ": duplicate patient_id " + f[0]);
  }
  if (table.empty()) throw DataError(path + ": no survival rows");
  return table;
}

inline void write_survival(const std::string& path, const SurvivalTable& t) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "patient_id,time_months,event\n";
  for (const auto& [id, rec] : t)
    out << id << "," << format_double(rec.time_months) << "," << rec.event
        << "\n";
}

// ---- feature table: patient_id,tumor_id,phase,<feature names...> ----

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<radiomics::TumorRecord> records;
};

inline FeatureTable read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_line(line);
  if (header.size() < 4 || header[0] != "patient_id" ||
      header[1] != "tumor_id" || header[2] != "phase")
    throw DataError(path +
                    ": expected header patient_id,tumor_id,phase,<features>");
  FeatureTable table;
  table.feature_names.assign(header.begin() + 3, header.end());

  // geometry columns, when present, feed filtering and largest-tumor pooling
  int vol_col = -1, diam_col = -1;
  for (size_t j = 0; j < table.feature_names.size(); ++j) {
    std::string low = table.feature_names[j];
    for (char& c : low) c = static_cast<char>(std::tolower(c));
    if (vol_col < 0 && low.find("volume") != std::string::npos)
      vol_col = static_cast<int>(j);
    if (diam_col < 0 && low.find("diameter") != std::string::npos)
      diam_col = static_cast<int>(j);
  }

  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != header.size())
      throw DataError(path + ": wrong field count at row " +
                      std::to_string(row));
    radiomics::TumorRecord rec;
    rec.patient_id = f[0];
    rec.tumor_id = f[1];
    rec.phase = radiomics::phase_from_string(f[2]);
    rec.features.resize(table.feature_names.size());
    for (size_t j = 0; j < rec.features.size(); ++j)
      rec.features[j] = parse_double(f[3 + j], path);
    if (vol_col >= 0) rec.volume_mm3 = rec.features[vol_col];
    if (diam_col >= 0) rec.longest_diameter_mm = rec.features[diam_col];
    table.records.push_back(std::move(rec));
  }
  std::set<std::string> keys;
  for (const auto& r : table.records) {
    const std::string key =
        r.patient_id + "\x1f" + r.tumor_id + "\x1f" + radiomics::phase_name(r.phase);
    if (!keys.insert(key).second)
      throw DataError(path + ": duplicate (patient_id, tumor_id, phase)");
  }
  return table;
}

inline void write_features(const std::string& path, const FeatureTable& t,
                           bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::out);
  if (!out) throw DataError(path + ": cannot open for writing");
  if (!append) {
    out << "patient_id,tumor_id,phase";
    for (const auto& n : t.feature_names) out << "," << n;
    out << "\n";
  }
  for (const auto& r : t.records) {
    out << r.patient_id << "," << r.tumor_id << ","
        << radiomics::phase_name(r.phase);
    for (double v : r.features) out << "," << format_double(v);
    out << "\n";
  }
}

// ---- hazards: patient_id,hazard ----

inline std::map<std::string, double> read_hazards(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = split_line(line);
  if (header.size() != 2 || header[0] != "patient_id" ||
      header[1] != "hazard")
    throw DataError(path + ": expected header patient_id,hazard");
  std::map<std::string, double> hazards;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 2) throw DataError(path + ": wrong field count");
    if (!hazards.emplace(f[0], parse_double(f[1], path)).second)
      throw DataError(path + ": duplicate patient_id " + f[0]);
  }
  if (hazards.empty()) throw DataError(path + ": no hazard rows");
  return hazards;
}

inline void write_hazards(const std::string& path,
                          const std::map<std::string, double>& hazards) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "patient_id,hazard\n";
  for (const auto& [id, h] : hazards)
    out << id << "," << format_double(h) << "\n";
}

}  // namespace crlm::csv
