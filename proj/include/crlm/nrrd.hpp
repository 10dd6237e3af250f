#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/volume.hpp"

namespace crlm::nrrd {

// NRRD subset: text header, `encoding: raw`, little-endian payload,
// 3-D float32 volumes or uint8 label masks. Anything else is rejected.

namespace detail {

struct Header {
  std::string type;
  int dimension = 0;
  std::array<int, 3> sizes{};
  std::array<double, 3> spacings{};
  std::string encoding;
  std::string endian = "little";
};

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

inline Header read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (line.size() >= 1 && line.back() == '\r') line.pop_back();
  if (line.rfind("NRRD000", 0) != 0)
    throw DataError(path + ": not an NRRD file");

  Header h;
  bool have_sizes = false, have_spacings = false, have_type = false,
       have_encoding = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) break;  // header terminator
    if (line[0] == '#') continue;
    const size_t colon = line.find(": ");
    if (colon == std::string::npos)
      throw DataError(path + ": malformed header line: " + line);
    const std::string key = trim(line.substr(0, colon));
    const std::string value = trim(line.substr(colon + 2));
    if (key == "type") {
      h.type = value;
      have_type = true;
    } else if (key == "dimension") {
      h.dimension = std::stoi(value);
    } else if (key == "sizes") {
      std::istringstream ss(value);
      if (!(ss >> h.sizes[0] >> h.sizes[1] >> h.sizes[2]))
        throw DataError(path + ": bad sizes field");
      have_sizes = true;
    } else if (key == "spacings") {
      std::istringstream ss(value);
      if (!(ss >> h.spacings[0] >> h.spacings[1] >> h.spacings[2]))
        throw DataError(path + ": bad spacings field");
      have_spacings = true;
    } else if (key == "encoding") {
      h.encoding = value;
      have_encoding = true;
    } else if (key == "endian") {
      h.endian = value;
    }
    // unknown fields are ignored on read
  }
  if (!have_type || !have_sizes || !have_spacings || !have_encoding)
    throw DataError(path + ": missing required NRRD fields");
  if (h.dimension != 3)
    throw DataError(path + ": only dimension 3 is supported");
  if (h.encoding != "raw")
    throw DataError(path + ": only raw encoding is supported");
  if (h.endian != "little")
    throw DataError(path + ": only little endian is supported");
  if (h.type != "float32" && h.type != "uint8")
    throw DataError(path + ": unsupported type: " + h.type);
  for (int s : h.sizes)
    if (s <= 0) throw DataError(path + ": sizes must be positive");
  return h;
}

inline std::vector<char> read_payload(std::istream& in, size_t bytes,
                                      const std::string& path) {
  std::vector<char> buf(bytes);
  in.read(buf.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<size_t>(in.gcount()) != bytes)
    throw DataError(path + ": payload shorter than header promises");
  char extra;
  if (in.read(&extra, 1))
    throw DataError(path + ": trailing bytes after payload");
  return buf;
}

inline void write_header(std::ostream& out, const std::string& type,
                         const std::array<int, 3>& sizes,
                         const std::array<double, 3>& spacings) {
  out << "NRRD0004\n";
  out << "type: " << type << "\n";
  out << "dimension: 3\n";
  out << "sizes: " << sizes[0] << " " << sizes[1] << " " << sizes[2] << "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "spacings: %.17g %.17g %.17g\n", spacings[0],
                spacings[1], spacings[2]);
  out << buf;
  out << "encoding: raw\n";
  out << "endian: little\n";
  out << "\n";
}

}  // namespace detail

inline Volume3D read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const auto h = detail::read_header(in, path);
  if (h.type != "float32")
    throw DataError(path + ": expected float32 volume, got " + h.type);
  const size_t n =
      static_cast<size_t>(h.sizes[0]) * h.sizes[1] * h.sizes[2];
  const auto buf = detail::read_payload(in, n * sizeof(float), path);
  std::vector<float> data(n);
  std::memcpy(data.data(), buf.data(), n * sizeof(float));
  return Volume3D(h.sizes[0], h.sizes[1], h.sizes[2], h.spacings,
                  std::move(data));
}

inline Mask3D read_mask(const std::string& path,
                        std::vector<uint8_t> declared_labels = {1, 2, 3}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const auto h = detail::read_header(in, path);
  if (h.type != "uint8")
    throw DataError(path + ": expected uint8 mask, got " + h.type);
  const size_t n =
      static_cast<size_t>(h.sizes[0]) * h.sizes[1] * h.sizes[2];
  auto buf = detail::read_payload(in, n, path);
  std::vector<uint8_t> data(n);
  std::memcpy(data.data(), buf.data(), n);
  return Mask3D(h.sizes[0], h.sizes[1], h.sizes[2], h.spacings,
                std::move(data), std::move(declared_labels));
}

inline void write_volume(const std::string& path, const Volume3D& vol) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  detail::write_header(out, "float32", {vol.nx(), vol.ny(), vol.nz()},
                       vol.spacing());
  out.write(reinterpret_cast<const char*>(vol.data().data()),
            static_cast<std::streamsize>(vol.size() * sizeof(float)));
  if (!out) throw DataError(path + ": write failed");
}

inline void write_mask(const std::string& path, const Mask3D& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  detail::write_header(out, "uint8", {mask.nx(), mask.ny(), mask.nz()},
                       mask.spacing());
  out.write(reinterpret_cast<const char*>(mask.data().data()),
            static_cast<std::streamsize>(mask.size()));
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace crlm::nrrd
