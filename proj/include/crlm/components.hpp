#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/volume.hpp"

namespace crlm {

enum class Connectivity { Faces6 = 6, Full26 = 26 };

struct Component {
  std::vector<size_t> voxels;  // linear indices, ascending
  double volume_mm3 = 0.0;
  std::array<int, 3> bbox_min{}, bbox_max{};  // inclusive
  double longest_diameter_mm = 0.0;
};

struct ComponentSet {
  std::vector<Component> components;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<int, 3> dims{};
  uint8_t label = 0;
};

namespace detail {

inline std::vector<std::array<int, 3>> neighbor_offsets(Connectivity conn) {
  std::vector<std::array<int, 3>> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        if (conn == Connectivity::Faces6 &&
            std::abs(dx) + std::abs(dy) + std::abs(dz) != 1)
          continue;
        offs.push_back({dx, dy, dz});
      }
  return offs;
}

}  // namespace detail

// Maximum pairwise distance between voxel centers, in millimetres.
// Interior voxels can never be an endpoint of the farthest pair, so for
// large components the candidate set is reduced to boundary voxels first;
// the pairwise pass itself is exact.
inline double longest_diameter(const Component& comp,
                               const std::array<double, 3>& spacing,
                               const std::array<int, 3>& dims) {
  if (comp.voxels.empty()) throw DataError("empty component");
  const size_t nx = static_cast<size_t>(dims[0]);
  const size_t ny = static_cast<size_t>(dims[1]);

  auto coords = [&](size_t lin) -> std::array<int, 3> {
    return {static_cast<int>(lin % nx), static_cast<int>((lin / nx) % ny),
            static_cast<int>(lin / (nx * ny))};
  };

  std::vector<std::array<int, 3>> pts;
  pts.reserve(comp.voxels.size());
  for (size_t lin : comp.voxels) pts.push_back(coords(lin));

  constexpr size_t kDirectLimit = 4096;
  if (pts.size() > kDirectLimit) {
    // keep voxels with at least one missing face neighbor
    std::vector<size_t> sorted = comp.voxels;  // already ascending
    auto present = [&](int x, int y, int z) {
      if (x < 0 || y < 0 || z < 0 || x >= dims[0] || y >= dims[1] ||
          z >= dims[2])
        return false;
      const size_t lin = static_cast<size_t>(z) * ny * nx +
                         static_cast<size_t>(y) * nx + static_cast<size_t>(x);
      return std::binary_search(sorted.begin(), sorted.end(), lin);
    };
    std::vector<std::array<int, 3>> boundary;
    for (const auto& p : pts) {
      const bool interior = present(p[0] - 1, p[1], p[2]) &&
                            present(p[0] + 1, p[1], p[2]) &&
                            present(p[0], p[1] - 1, p[2]) &&
                            present(p[0], p[1] + 1, p[2]) &&
                            present(p[0], p[1], p[2] - 1) &&
                            present(p[0], p[1], p[2] + 1);
      if (!interior) boundary.push_back(p);
    }
    pts.swap(boundary);
  }

  double best = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) {
      const double dx = (pts[i][0] - pts[j][0]) * spacing[0];
      const double dy = (pts[i][1] - pts[j][1]) * spacing[1];
      const double dz = (pts[i][2] - pts[j][2]) * spacing[2];
      best = std::max(best, dx * dx + dy * dy + dz * dz);
    }
  return std::sqrt(best);
}

// Components of one label. Output order is deterministic: ascending
// minimum linear voxel index.
inline ComponentSet connected_components(
    const Mask3D& mask, uint8_t label,
    Connectivity conn = Connectivity::Full26) {
  if (label == 0 || !mask.label_declared(label))
    throw DataError("label " + std::to_string(static_cast<int>(label)) +
                    " is not declared for this mask");

  ComponentSet out;
  out.spacing = mask.spacing();
  out.dims = {mask.nx(), mask.ny(), mask.nz()};
  out.label = label;

  const auto offs = detail::neighbor_offsets(conn);
  const auto data = mask.data();
  std::vector<uint8_t> visited(mask.size(), 0);
  std::vector<size_t> stack;

  const double voxvol = mask.voxel_volume_mm3();
  for (size_t start = 0; start < data.size(); ++start) {
    if (data[start] != label || visited[start]) continue;
    Component comp;
    comp.bbox_min = {mask.nx(), mask.ny(), mask.nz()};
    comp.bbox_max = {-1, -1, -1};
    stack.clear();
    stack.push_back(start);
    visited[start] = 1;
    while (!stack.empty()) {
      const size_t cur = stack.back();
      stack.pop_back();
      comp.voxels.push_back(cur);
      const auto c = mask.coords(cur);
      for (int a = 0; a < 3; ++a) {
        comp.bbox_min[a] = std::min(comp.bbox_min[a], c[a]);
        comp.bbox_max[a] = std::max(comp.bbox_max[a], c[a]);
      }
      for (const auto& o : offs) {
        const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
        if (!mask.in_bounds(x, y, z)) continue;
        const size_t lin = mask.index(x, y, z);
        if (visited[lin] || data[lin] != label) continue;
        visited[lin] = 1;
        stack.push_back(lin);
      }
    }
    std::sort(comp.voxels.begin(), comp.voxels.end());
    comp.volume_mm3 = static_cast<double>(comp.voxels.size()) * voxvol;
    comp.longest_diameter_mm =
        longest_diameter(comp, out.spacing, out.dims);
    out.components.push_back(std::move(comp));
  }
  return out;
}

// Clears components of `label` whose volume is below the threshold.
// Other labels are untouched.
inline Mask3D remove_small_objects(const Mask3D& mask, uint8_t label,
                                   double min_volume_mm3,
                                   Connectivity conn = Connectivity::Full26) {
  if (min_volume_mm3 < 0.0)
    throw DataError("min_volume_mm3 must be non-negative");
  Mask3D out = mask;
  const auto comps = connected_components(mask, label, conn);
  for (const auto& comp : comps.components) {
    if (comp.volume_mm3 >= min_volume_mm3) continue;
    for (size_t lin : comp.voxels) out.mutable_data()[lin] = 0;
  }
  return out;
}

// Fills cavities of `label` that are not 6-connected to the volume
// border: background is flooded from the border, and unreached zero
// voxels become `label`. Used to turn a shell-like organ prediction into
// the region it encloses.
inline Mask3D fill_enclosed_cavities(const Mask3D& mask, uint8_t label) {
  Mask3D out = mask;
  std::vector<uint8_t> outside(mask.size(), 0);
  std::vector<size_t> stack;
  auto push = [&](int x, int y, int z) {
    if (!mask.in_bounds(x, y, z)) return;
    const size_t lin = mask.index(x, y, z);
    if (outside[lin] || mask.data()[lin] == label) return;
    outside[lin] = 1;
    stack.push_back(lin);
  };
  for (int z = 0; z < mask.nz(); ++z)
    for (int y = 0; y < mask.ny(); ++y)
      for (int x = 0; x < mask.nx(); ++x)
        if (x == 0 || y == 0 || z == 0 || x == mask.nx() - 1 ||
            y == mask.ny() - 1 || z == mask.nz() - 1)
          push(x, y, z);
  while (!stack.empty()) {
    const size_t cur = stack.back();
    stack.pop_back();
    const auto c = mask.coords(cur);
    push(c[0] - 1, c[1], c[2]);
    push(c[0] + 1, c[1], c[2]);
    push(c[0], c[1] - 1, c[2]);
    push(c[0], c[1] + 1, c[2]);
    push(c[0], c[1], c[2] - 1);
    push(c[0], c[1], c[2] + 1);
  }
  for (size_t i = 0; i < out.size(); ++i)
    if (!outside[i] && out.mutable_data()[i] == 0)
      out.mutable_data()[i] = label;
  return out;
}

// Clears tumor voxels that fall outside the organ (organ_mask == 0).
inline Mask3D mask_outside(const Mask3D& tumor_mask, const Mask3D& organ_mask) {
  if (!tumor_mask.same_grid(organ_mask))
    throw DataError("tumor/organ mask grids do not match");
  Mask3D out = tumor_mask;
  const auto organ = organ_mask.data();
  for (size_t i = 0; i < out.size(); ++i)
    if (organ[i] == 0) out.mutable_data()[i] = 0;
  return out;
}

}  // namespace crlm
