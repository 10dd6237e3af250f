#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/threadpool.hpp"
#include "crlm/volume.hpp"

namespace crlm::samonai {

// Zero-shot 3D prompt propagation over a pluggable 2D promptable
// segmenter. One positive point per object (negative optional) is
// expanded into a full 3D mask in three steps: segment the seed slice,
// segment the best slice of each remaining view, then sweep every third
// slice of all three views inside the bounding box of the accumulated
// positive points, reconstruct per-view logit volumes by linear
// interpolation, average them, and binarize at mu + 2*sigma.

struct Point2 {
  int u = 0, v = 0;
  bool operator==(const Point2&) const = default;
};

struct Point3 {
  int x = 0, y = 0, z = 0;
  bool operator==(const Point3&) const = default;
};

struct CriterionWeights {
  double alpha = 1.0, beta = 1.0, gamma = 2.0;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
      throw DataError("criterion weights must be non-negative");
    if (alpha == 0 && beta == 0 && gamma == 0)
      throw DataError("at least one criterion weight must be positive");
  }
};

// ---- prompt selection criteria ----

// Euclidean distance from the centroid of the candidate set, voxel units.
inline double criterion_location(Point2 p, std::span<const Point2> candidates) {
  if (candidates.empty()) throw DataError("empty candidate set");
  double cu = 0.0, cv = 0.0;
  for (const auto& q : candidates) {
    cu += q.u;
    cv += q.v;
  }
  cu /= static_cast<double>(candidates.size());
  cv /= static_cast<double>(candidates.size());
  const double du = p.u - cu, dv = p.v - cv;
  return std::sqrt(du * du + dv * dv);
}

// |I(p) - median intensity over the candidate set|.
inline double criterion_intensity(Point2 p, std::span<const Point2> candidates,
                                  const Grid2D& image) {
  if (candidates.empty()) throw DataError("empty candidate set");
  std::vector<double> vals;
  vals.reserve(candidates.size());
  for (const auto& q : candidates)
    vals.push_back(static_cast<double>(image.at(q.u, q.v)));
  std::sort(vals.begin(), vals.end());
  const double med = median_sorted(vals);
  return std::fabs(static_cast<double>(image.at(p.u, p.v)) - med);
}

// Population standard deviation of the 11x11 neighborhood centered at p,
// clipped to the slice at borders (no padding).
inline double criterion_homogeneity(Point2 p, const Grid2D& image,
                                    int window = 11) {
  const int r = window / 2;
  const int u0 = std::max(0, p.u - r), u1 = std::min(image.width - 1, p.u + r);
  const int v0 = std::max(0, p.v - r), v1 = std::min(image.height - 1, p.v + r);
  double sum = 0.0;
  int n = 0;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      sum += image.at(u, v);
      ++n;
    }
  const double mu = sum / n;
  double acc = 0.0;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) {
      const double d = image.at(u, v) - mu;
      acc += d * d;
    }
  return std::sqrt(acc / n);
}

// Intensity floor for negative prompts: excludes the lowest 10% of the
// intensity range.
inline double negative_threshold(const Volume3D& vol) {
  float lo = vol.data().front(), hi = lo;
  for (float v : vol.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return static_cast<double>(lo) + 0.1 * (static_cast<double>(hi) - lo);
}

namespace detail {

// min-max over the candidate set; degenerate spread maps to 0 so the
// criterion drops out instead of producing NaN.
inline void minmax_normalize(std::vector<double>& vals) {
  const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *mn, hi = *mx;
  if (hi == lo) {
    std::fill(vals.begin(), vals.end(), 0.0);
    return;
  }
  for (double& v : vals) v = (v - lo) / (hi - lo);
}

inline size_t slice_linear_index(const Grid2D& image, Point2 p) {
  return static_cast<size_t>(p.v) * image.width + p.u;
}

}  // namespace detail

// argmin over candidates of the normalized weighted criterion sum; ties
// break toward the smallest in-slice linear index.
inline Point2 select_prompt(std::span<const Point2> candidates,
                            const Grid2D& image,
                            const CriterionWeights& w = {}) {
  if (candidates.empty()) throw DataError("empty candidate set");
  w.validate();
  const size_t n = candidates.size();
  std::vector<double> loc(n), inten(n), homog(n);
  for (size_t i = 0; i < n; ++i) {
    loc[i] = criterion_location(candidates[i], candidates);
    inten[i] = criterion_intensity(candidates[i], candidates, image);
    homog[i] = criterion_homogeneity(candidates[i], image);
  }
  detail::minmax_normalize(loc);
  detail::minmax_normalize(inten);
  detail::minmax_normalize(homog);

  size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  size_t best_lin = std::numeric_limits<size_t>::max();
  for (size_t i = 0; i < n; ++i) {
    const double cost = w.alpha * loc[i] + w.beta * inten[i] + w.gamma * homog[i];
    const size_t lin = detail::slice_linear_index(image, candidates[i]);
    if (cost < best_cost || (cost == best_cost && lin < best_lin)) {
      best = i;
      best_cost = cost;
      best_lin = lin;
    }
  }
  return candidates[best];
}

// ---- segmenter interface ----

class SliceSegmenter {
 public:
  virtual ~SliceSegmenter() = default;
  // Returns a logit grid with the same dims as the input; higher = more
  // object. Must be deterministic for fixed inputs.
  virtual Grid2D segment(const Grid2D& image, std::span<const Point2> positives,
                         std::span<const Point2> negatives) const = 0;
  // Implementations that are not safe for concurrent invocation return
  // false and the engine runs them serially.
  virtual bool thread_safe() const { return true; }
};

// Test stand-in for a promptable foundation model: flood fill from each
// positive point over 4-connected pixels within `tolerance` of the seed
// intensity; regions reachable from a negative point the same way are
// suppressed. Logits are 1 inside, 0 outside.
class RegionGrowSegmenter final : public SliceSegmenter {
 public:
  explicit RegionGrowSegmenter(double tolerance = 0.0)
      : tolerance_(tolerance) {
    if (tolerance < 0) throw DataError("tolerance must be non-negative");
  }

  Grid2D segment(const Grid2D& image, std::span<const Point2> positives,
                 std::span<const Point2> negatives) const override {
    if (positives.empty()) throw DataError("segmenter needs a positive point");
    std::vector<uint8_t> in(image.size(), 0), out(image.size(), 0);
    for (const auto& p : positives) fill(image, p, in);
    for (const auto& p : negatives) fill(image, p, out);
    Grid2D logits(image.width, image.height, 0.0f);
    for (size_t i = 0; i < image.size(); ++i)
      logits.values[i] = (in[i] && !out[i]) ? 1.0f : 0.0f;
    return logits;
  }

 private:
  void fill(const Grid2D& image, Point2 seed,
            std::vector<uint8_t>& marks) const {
    if (!image.in_bounds(seed.u, seed.v))
      throw DataError("prompt point outside slice");
    const double ref = image.at(seed.u, seed.v);
    std::deque<Point2> queue;
    auto try_push = [&](int u, int v) {
      if (!image.in_bounds(u, v)) return;
      const size_t lin = image.index(u, v);
      if (marks[lin]) return;
      if (std::fabs(static_cast<double>(image.at(u, v)) - ref) > tolerance_)
        return;
      marks[lin] = 1;
      queue.push_back({u, v});
    };
    try_push(seed.u, seed.v);
    while (!queue.empty()) {
      const Point2 p = queue.front();
      queue.pop_front();
      try_push(p.u - 1, p.v);
      try_push(p.u + 1, p.v);
      try_push(p.u, p.v - 1);
      try_push(p.u, p.v + 1);
    }
  }

  double tolerance_;
};

// ---- adaptive binarization ----

struct ObjectLogits {
  Volume3D logits;
  double mu = 0.0, sigma = 0.0, threshold = 0.0;  // threshold = mu + 2*sigma
};

inline ObjectLogits make_object_logits(Volume3D logits) {
  ObjectLogits out{std::move(logits)};
  double sum = 0.0;
  for (float v : out.logits.data()) sum += v;
  out.mu = sum / static_cast<double>(out.logits.size());
  double acc = 0.0;
  for (float v : out.logits.data()) {
    const double d = v - out.mu;
    acc += d * d;
  }
  out.sigma = std::sqrt(acc / static_cast<double>(out.logits.size()));
  out.threshold = out.mu + 2.0 * out.sigma;
  return out;
}

// Voxels with logit strictly above mu + 2*sigma. All-equal logits give an
// empty mask.
inline Mask3D binarize(const ObjectLogits& obj, uint8_t label = 1) {
  Mask3D mask = Mask3D::zeros(obj.logits.nx(), obj.logits.ny(),
                              obj.logits.nz(), obj.logits.spacing());
  const auto data = obj.logits.data();
  for (size_t i = 0; i < data.size(); ++i)
    if (static_cast<double>(data[i]) > obj.threshold)
      mask.mutable_data()[i] = label;
  return mask;
}

namespace detail {

// Slice-level masks in steps 1-2 use the same adaptive rule as the final
// volume: keep pixels with logit strictly above mu + 2*sigma of the
// slice. A fill that swallows most of the slice (e.g. a background seed)
// therefore yields an empty mask instead of a huge one.
inline std::vector<Point2> binarize_slice(const Grid2D& logits) {
  double sum = 0.0;
  for (float v : logits.values) sum += v;
  const double mu = sum / static_cast<double>(logits.size());
  double acc = 0.0;
  for (float v : logits.values) {
    const double d = v - mu;
    acc += d * d;
  }
  const double thr = mu + 2.0 * std::sqrt(acc / logits.size());
  std::vector<Point2> pts;
  for (int v = 0; v < logits.height; ++v)
    for (int u = 0; u < logits.width; ++u)
      if (static_cast<double>(logits.at(u, v)) > thr) pts.push_back({u, v});
  return pts;
}

}  // namespace detail

// ---- propagation engine ----

struct SeedObject {
  int label = 1;
  View view = View::Axial;           // view of the user-annotated slice
  std::vector<Point3> positives;     // all on one slice of `view`
  std::vector<Point3> negatives;     // optional, same slice (step 1 only)
};

struct PropagateConfig {
  CriterionWeights weights;
  int sample_step = 3;   // every 3rd slice inside the box
  int margin = 3;        // voxel margin for negative-prompt exclusion
  int threads = 1;
};

struct ObjectResult {
  int label = 1;
  bool ok = false;
  std::string failure;
  Mask3D mask;
  ObjectLogits fused;
};

namespace detail {

struct BBox3 {
  std::array<int, 3> min{}, max{};  // inclusive
};

inline int axis_coord(const Point3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

inline Point2 project(View view, const Point3& p) {
  const auto [u, v] = xyz_to_slice(view, p.x, p.y, p.z);
  return {u, v};
}

// Unique 2D points of `pts` that lie on slice (view, k), ordered by
// in-slice linear index.
inline std::vector<Point2> points_on_slice(const std::vector<Point3>& pts,
                                           View view, int k, int slice_width) {
  const int axis = view_axis(view);
  std::vector<Point2> out;
  for (const auto& p : pts)
    if (axis_coord(p, axis) == k) out.push_back(project(view, p));
  std::sort(out.begin(), out.end(), [&](const Point2& a, const Point2& b) {
    return static_cast<size_t>(a.v) * slice_width + a.u <
           static_cast<size_t>(b.v) * slice_width + b.u;
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<Point3> lift(View view, int k,
                                const std::vector<Point2>& pts) {
  std::vector<Point3> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    const auto xyz = slice_to_xyz(view, k, p.u, p.v);
    out.push_back({xyz[0], xyz[1], xyz[2]});
  }
  return out;
}

// Step-2 negative prompt: nearest point collinear with the positive run,
// at least `margin` voxels outside it, with intensity >= t_neg.
inline std::optional<Point2> step2_negative(const Volume3D& vol, View view,
                                            int k,
                                            const std::vector<Point2>& run,
                                            double t_neg, int margin) {
  // The run comes from a single perpendicular slice, so one in-slice
  // coordinate is constant; the other varies.
  bool u_varies = false;
  for (const auto& p : run)
    if (p.u != run.front().u) u_varies = true;
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (const auto& p : run) {
    const int t = u_varies ? p.u : p.v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  const int fixed = u_varies ? run.front().v : run.front().u;
  const auto [w, h] = slice_extent(vol, view);
  const int extent = u_varies ? w : h;

  auto intensity = [&](int t) {
    const int u = u_varies ? t : fixed;
    const int v = u_varies ? fixed : t;
    const auto xyz = slice_to_xyz(view, k, u, v);
    return static_cast<double>(vol.at(xyz[0], xyz[1], xyz[2]));
  };

  // Walk outward from both ends; the nearer qualifying point wins, with
  // the lower side breaking ties (smaller linear index).
  for (int d = margin; ; ++d) {
    const int left = lo - d, right = hi + d;
    const bool left_ok = left >= 0;
    const bool right_ok = right < extent;
    if (!left_ok && !right_ok) break;
    if (left_ok && intensity(left) >= t_neg)
      return Point2{u_varies ? left : fixed, u_varies ? fixed : left};
    if (right_ok && intensity(right) >= t_neg)
      return Point2{u_varies ? right : fixed, u_varies ? fixed : right};
  }
  return std::nullopt;
}

// Step-3 negative prompt: nearest in-slice point outside the projected
// box grown by `margin`, intensity >= t_neg, closest to the box center.
inline std::optional<Point2> step3_negative(const Grid2D& image,
                                            int umin, int umax, int vmin,
                                            int vmax, double t_neg,
                                            int margin) {
  const double cu = 0.5 * (umin + umax), cv = 0.5 * (vmin + vmax);
  const int exu0 = umin - margin, exu1 = umax + margin;
  const int exv0 = vmin - margin, exv1 = vmax + margin;
  std::optional<Point2> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int v = 0; v < image.height; ++v)
    for (int u = 0; u < image.width; ++u) {
      if (u >= exu0 && u <= exu1 && v >= exv0 && v <= exv1) continue;
      if (static_cast<double>(image.at(u, v)) < t_neg) continue;
      const double du = u - cu, dv = v - cv;
      const double d2 = du * du + dv * dv;
      if (d2 < best_d2) {  // scan order already favors smaller linear index
        best_d2 = d2;
        best = Point2{u, v};
      }
    }
  return best;
}

}  // namespace detail

inline ObjectResult propagate_object(const Volume3D& vol,
                                     const SeedObject& seed,
                                     const SliceSegmenter& segmenter,
                                     const PropagateConfig& cfg = {}) {
  ObjectResult result;
  result.label = seed.label;
  cfg.weights.validate();

  if (seed.positives.empty()) throw DataError("object has no positive seed");
  for (const auto& p : seed.positives)
    if (!vol.in_bounds(p.x, p.y, p.z)) throw DataError("seed out of bounds");
  for (const auto& p : seed.negatives)
    if (!vol.in_bounds(p.x, p.y, p.z)) throw DataError("seed out of bounds");

  const View view1 = seed.view;
  const int axis1 = view_axis(view1);
  const int k1 = detail::axis_coord(seed.positives.front(), axis1);
  for (const auto& p : seed.positives)
    if (detail::axis_coord(p, axis1) != k1)
      throw DataError("positive seeds of one object must share a slice");
  for (const auto& p : seed.negatives)
    if (detail::axis_coord(p, axis1) != k1)
      throw DataError("negative seeds must lie on the seed slice");

  // Step 1: segment the user-annotated slice with the user prompts.
  const Grid2D slice1 = slice(vol, view1, k1);
  std::vector<Point2> pos1, neg1;
  for (const auto& p : seed.positives) pos1.push_back(detail::project(view1, p));
  for (const auto& p : seed.negatives) neg1.push_back(detail::project(view1, p));
  const Grid2D logits1 = segmenter.segment(slice1, pos1, neg1);
  const std::vector<Point2> mask1 = detail::binarize_slice(logits1);
  if (mask1.empty()) {
    result.failure = "step-1 mask is empty";
    result.mask = Mask3D::zeros(vol.nx(), vol.ny(), vol.nz(), vol.spacing());
    return result;
  }

  const double t_neg = negative_threshold(vol);

  // Positive points accumulated from the segmented slices; these are the
  // three perpendicular "lines" the box is fitted over.
  std::vector<Point3> positive_pts = detail::lift(view1, k1, mask1);

  // Step 2: one slice per remaining view, the one crossed by the most
  // step-1 positive points (ties -> smallest slice index).
  for (View view2 : {View::Axial, View::Sagittal, View::Coronal}) {
    if (view2 == view1) continue;
    const int axis2 = view_axis(view2);
    const int extent = vol.dim(axis2);
    const auto [w2, h2] = slice_extent(vol, view2);
    const std::vector<Point3> step1_pts = detail::lift(view1, k1, mask1);
    int best_k = -1;
    size_t best_count = 0;
    for (int k = 0; k < extent; ++k) {
      const size_t c =
          detail::points_on_slice(step1_pts, view2, k, w2).size();
      if (c > best_count) {
        best_count = c;
        best_k = k;
      }
    }
    if (best_k < 0) continue;
    const auto run = detail::points_on_slice(step1_pts, view2, best_k, w2);
    const Grid2D slice2 = slice(vol, view2, best_k);
    const Point2 pos = select_prompt(run, slice2, cfg.weights);
    std::vector<Point2> neg;
    if (const auto n =
            detail::step2_negative(vol, view2, best_k, run, t_neg, cfg.margin))
      neg.push_back(*n);
    const Grid2D logits2 = segmenter.segment(slice2, {&pos, 1}, neg);
    const auto mask2 = detail::binarize_slice(logits2);
    const auto lifted = detail::lift(view2, best_k, mask2);
    positive_pts.insert(positive_pts.end(), lifted.begin(), lifted.end());
  }

  // 3D bounding box over the accumulated positive points.
  detail::BBox3 box;
  box.min = {vol.nx(), vol.ny(), vol.nz()};
  box.max = {-1, -1, -1};
  for (const auto& p : positive_pts) {
    const std::array<int, 3> c{p.x, p.y, p.z};
    for (int a = 0; a < 3; ++a) {
      box.min[a] = std::min(box.min[a], c[a]);
      box.max[a] = std::max(box.max[a], c[a]);
    }
  }

  // Step 3: sweep sampled slices of every view inside the box.
  struct Job {
    View view;
    int k;
  };
  std::vector<Job> jobs;
  std::array<std::vector<int>, 3> sampled_per_view;
  for (View view : {View::Axial, View::Sagittal, View::Coronal}) {
    const int axis = view_axis(view);
    std::vector<int> ks;
    for (int k = box.min[axis]; k <= box.max[axis]; k += cfg.sample_step)
      ks.push_back(k);
    if (ks.empty() || ks.back() != box.max[axis]) ks.push_back(box.max[axis]);
    sampled_per_view[static_cast<int>(view)] = ks;
    for (int k : ks) jobs.push_back({view, k});
  }

  std::vector<Grid2D> job_logits(jobs.size());
  const int threads = segmenter.thread_safe() ? cfg.threads : 1;
  parallel_for(jobs.size(), threads, [&](size_t j) {
    const auto [view, k] = jobs[j];
    const auto [w, h] = slice_extent(vol, view);
    const auto pts = detail::points_on_slice(positive_pts, view, k, w);
    if (pts.empty()) {
      job_logits[j] = Grid2D(w, h, 0.0f);  // nothing to prompt with
      return;
    }
    const Grid2D img = slice(vol, view, k);
    const Point2 pos = select_prompt(pts, img, cfg.weights);
    // project the 3D box into this slice's (u,v) plane
    const auto pmin = detail::project(
        view, Point3{box.min[0], box.min[1], box.min[2]});
    const auto pmax = detail::project(
        view, Point3{box.max[0], box.max[1], box.max[2]});
    std::vector<Point2> neg;
    if (const auto n = detail::step3_negative(img, pmin.u, pmax.u, pmin.v,
                                              pmax.v, t_neg, cfg.margin))
      neg.push_back(*n);
    job_logits[j] = segmenter.segment(img, {&pos, 1}, neg);
  });

  // Reconstruct one logit volume per view: sampled slices verbatim,
  // skipped slices linearly interpolated, slices outside the box zero.
  Volume3D fused =
      Volume3D::filled(vol.nx(), vol.ny(), vol.nz(), vol.spacing(), 0.0f);
  size_t job_base = 0;
  std::array<Volume3D, 3> view_volumes{fused, fused, fused};
  for (View view : {View::Axial, View::Sagittal, View::Coronal}) {
    const auto& ks = sampled_per_view[static_cast<int>(view)];
    Volume3D& lv = view_volumes[static_cast<int>(view)];
    for (size_t i = 0; i < ks.size(); ++i)
      set_slice(lv, view, ks[i], job_logits[job_base + i]);
    for (size_t i = 0; i + 1 < ks.size(); ++i) {
      const int a = ks[i], b = ks[i + 1];
      for (int k = a + 1; k < b; ++k) {
        const double t = static_cast<double>(k - a) / (b - a);
        const Grid2D& ga = job_logits[job_base + i];
        const Grid2D& gb = job_logits[job_base + i + 1];
        Grid2D gk(ga.width, ga.height);
        for (size_t q = 0; q < gk.size(); ++q)
          gk.values[q] = static_cast<float>((1.0 - t) * ga.values[q] +
                                            t * gb.values[q]);
        set_slice(lv, view, k, gk);
      }
    }
    job_base += ks.size();
  }

  for (size_t i = 0; i < fused.size(); ++i)
    fused.mutable_data()[i] = static_cast<float>(
        (static_cast<double>(view_volumes[0].data()[i]) +
         static_cast<double>(view_volumes[1].data()[i]) +
         static_cast<double>(view_volumes[2].data()[i])) /
        3.0);

  result.fused = make_object_logits(std::move(fused));
  result.mask = binarize(result.fused, static_cast<uint8_t>(seed.label));
  result.ok = true;
  return result;
}

inline std::vector<ObjectResult> propagate(const Volume3D& vol,
                                           std::span<const SeedObject> seeds,
                                           const SliceSegmenter& segmenter,
                                           const PropagateConfig& cfg = {}) {
  std::vector<ObjectResult> results;
  results.reserve(seeds.size());
  for (const auto& seed : seeds)
    results.push_back(propagate_object(vol, seed, segmenter, cfg));
  return results;
}

// Merges per-object masks into one label volume; later objects win on
// overlapping voxels.
inline Mask3D merge_masks(std::span<const ObjectResult> results,
                          const Volume3D& vol,
                          std::vector<uint8_t> declared_labels = {1, 2, 3}) {
  Mask3D merged = Mask3D::zeros(vol.nx(), vol.ny(), vol.nz(), vol.spacing(),
                                std::move(declared_labels));
  for (const auto& r : results) {
    if (!r.ok) continue;
    const auto data = r.mask.data();
    for (size_t i = 0; i < data.size(); ++i)
      if (data[i] != 0) merged.mutable_data()[i] = data[i];
  }
  return merged;
}

}  // namespace crlm::samonai
