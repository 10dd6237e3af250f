#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crlm/common.hpp"

namespace crlm {

// Volumes are dense row-major grids with x fastest, then y, then z.
// Voxel centers live at index * spacing (millimetres); there is no
// origin/orientation handling.

enum class View { Axial = 0, Sagittal = 1, Coronal = 2 };

constexpr int view_axis(View v) {
  switch (v) {
    case View::Axial: return 2;     // slices stack along z
    case View::Sagittal: return 0;  // along x
    case View::Coronal: return 1;   // along y
  }
  return 2;
}

inline View view_from_string(const std::string& s) {
  if (s == "axial") return View::Axial;
  if (s == "sagittal") return View::Sagittal;
  if (s == "coronal") return View::Coronal;
  throw DataError("unknown view: " + s);
}

inline const char* view_name(View v) {
  switch (v) {
    case View::Axial: return "axial";
    case View::Sagittal: return "sagittal";
    case View::Coronal: return "coronal";
  }
  return "axial";
}

// 2D plane extracted from a volume; u is the fast axis.
template <typename T>
struct Plane {
  int width = 0, height = 0;
  std::vector<T> values;

  Plane() = default;
  Plane(int w, int h, T fill = T{})
      : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

  size_t index(int u, int v) const {
    return static_cast<size_t>(v) * width + u;
  }
  T at(int u, int v) const { return values[index(u, v)]; }
  T& at(int u, int v) { return values[index(u, v)]; }
  size_t size() const { return values.size(); }
  bool in_bounds(int u, int v) const {
    return u >= 0 && u < width && v >= 0 && v < height;
  }
};

using Grid2D = Plane<float>;

template <typename T>
class GridVolume {
 public:
  GridVolume() = default;

  GridVolume(int nx, int ny, int nz, std::array<double, 3> spacing,
             std::vector<T> data)
      : nx_(nx), ny_(ny), nz_(nz), spacing_(spacing), data_(std::move(data)) {
    if (nx_ <= 0 || ny_ <= 0 || nz_ <= 0)
      throw DataError("volume dimensions must be positive");
    for (double s : spacing_)
      if (!(s > 0.0) || !std::isfinite(s))
        throw DataError("voxel spacings must be positive and finite");
    if (data_.size() != size())
      throw DataError("volume data length does not match dimensions");
    if constexpr (std::is_floating_point_v<T>) {
      for (T v : data_)
        if (!std::isfinite(v))
          throw DataError("volume contains non-finite values");
    }
  }

  static GridVolume filled(int nx, int ny, int nz,
                           std::array<double, 3> spacing, T value = T{}) {
    return GridVolume(nx, ny, nz, spacing,
                      std::vector<T>(static_cast<size_t>(nx) * ny * nz, value));
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  int dim(int axis) const { return axis == 0 ? nx_ : (axis == 1 ? ny_ : nz_); }
  const std::array<double, 3>& spacing() const { return spacing_; }
  double voxel_volume_mm3() const {
    return spacing_[0] * spacing_[1] * spacing_[2];
  }

  size_t size() const {
    return static_cast<size_t>(nx_) * static_cast<size_t>(ny_) *
           static_cast<size_t>(nz_);
  }

  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(z) * ny_ * nx_ +
           static_cast<size_t>(y) * nx_ + static_cast<size_t>(x);
  }

  std::array<int, 3> coords(size_t linear) const {
    const int x = static_cast<int>(linear % nx_);
    const int y = static_cast<int>((linear / nx_) % ny_);
    const int z = static_cast<int>(linear / (static_cast<size_t>(nx_) * ny_));
    return {x, y, z};
  }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < nx_ && y >= 0 && y < ny_ && z >= 0 && z < nz_;
  }

  T at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& at(int x, int y, int z) { return data_[index(x, y, z)]; }

  std::span<const T> data() const { return data_; }
  std::vector<T>& mutable_data() { return data_; }

  bool same_grid(const GridVolume& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && nz_ == o.nz_ &&
           spacing_ == o.spacing_;
  }

  template <typename U>
  bool same_grid(const GridVolume<U>& o) const {
    return nx_ == o.nx() && ny_ == o.ny() && nz_ == o.nz() &&
           spacing_ == o.spacing();
  }

 private:
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using Volume3D = GridVolume<float>;

// Label volume; 0 is background. Labels used by operations must come from
// the declared label set.
class Mask3D : public GridVolume<uint8_t> {
 public:
  Mask3D() = default;
  Mask3D(int nx, int ny, int nz, std::array<double, 3> spacing,
         std::vector<uint8_t> data,
         std::vector<uint8_t> declared_labels = {1, 2, 3})
      : GridVolume<uint8_t>(nx, ny, nz, spacing, std::move(data)),
        labels_(std::move(declared_labels)) {}

  static Mask3D zeros(int nx, int ny, int nz, std::array<double, 3> spacing,
                      std::vector<uint8_t> declared_labels = {1, 2, 3}) {
    return Mask3D(nx, ny, nz, spacing,
                  std::vector<uint8_t>(static_cast<size_t>(nx) * ny * nz, 0),
                  std::move(declared_labels));
  }

  const std::vector<uint8_t>& declared_labels() const { return labels_; }

  bool label_declared(uint8_t label) const {
    for (uint8_t l : labels_)
      if (l == label) return true;
    return false;
  }

 private:
  std::vector<uint8_t> labels_{1, 2, 3};
};

// (view, k, u, v) -> (x, y, z). The in-slice axes are the two remaining
// axes in cyclic order, u fastest.
constexpr std::array<int, 3> slice_to_xyz(View view, int k, int u, int v) {
  switch (view) {
    case View::Axial: return {u, v, k};
    case View::Sagittal: return {k, u, v};
    case View::Coronal: return {u, k, v};
  }
  return {u, v, k};
}

// Inverse of slice_to_xyz for a fixed view: (x,y,z) -> (u,v).
constexpr std::pair<int, int> xyz_to_slice(View view, int x, int y, int z) {
  switch (view) {
    case View::Axial: return {x, y};
    case View::Sagittal: return {y, z};
    case View::Coronal: return {x, z};
  }
  return {x, y};
}

template <typename T>
std::pair<int, int> slice_extent(const GridVolume<T>& vol, View view) {
  switch (view) {
    case View::Axial: return {vol.nx(), vol.ny()};
    case View::Sagittal: return {vol.ny(), vol.nz()};
    case View::Coronal: return {vol.nx(), vol.nz()};
  }
  return {vol.nx(), vol.ny()};
}

template <typename T>
Plane<T> slice(const GridVolume<T>& vol, View view, int k) {
  const int axis = view_axis(view);
  if (k < 0 || k >= vol.dim(axis))
    throw DataError("slice index out of range");
  const auto [w, h] = slice_extent(vol, view);
  Plane<T> plane(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const auto [x, y, z] = slice_to_xyz(view, k, u, v);
      plane.at(u, v) = vol.at(x, y, z);
    }
  return plane;
}

template <typename T>
void set_slice(GridVolume<T>& vol, View view, int k, const Plane<T>& plane) {
  const int axis = view_axis(view);
  if (k < 0 || k >= vol.dim(axis))
    throw DataError("slice index out of range");
  const auto [w, h] = slice_extent(vol, view);
  if (plane.width != w || plane.height != h)
    throw DataError("slice dimensions do not match volume");
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const auto [x, y, z] = slice_to_xyz(view, k, u, v);
      vol.at(x, y, z) = plane.at(u, v);
    }
}

}  // namespace crlm
