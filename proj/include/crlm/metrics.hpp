#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "crlm/common.hpp"
#include "crlm/components.hpp"
#include "crlm/volume.hpp"

namespace crlm::metrics {

// Dice-Sorensen coefficient for one class; two empty sets agree
// vacuously (1).
inline double dice(const Mask3D& pred, const Mask3D& gt, uint8_t label) {
  if (!pred.same_grid(gt)) throw DataError("mask grids do not match");
  size_t p = 0, g = 0, both = 0;
  const auto pd = pred.data(), gd = gt.data();
  for (size_t i = 0; i < pd.size(); ++i) {
    const bool in_p = pd[i] == label, in_g = gd[i] == label;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

// Dice between two components (sorted voxel index lists).
inline double component_dice(const Component& a, const Component& b) {
  size_t both = 0, i = 0, j = 0;
  while (i < a.voxels.size() && j < b.voxels.size()) {
    if (a.voxels[i] < b.voxels[j]) ++i;
    else if (a.voxels[i] > b.voxels[j]) ++j;
    else { ++both; ++i; ++j; }
  }
  return 2.0 * static_cast<double>(both) /
         static_cast<double>(a.voxels.size() + b.voxels.size());
}

struct Match {
  int gt_index = -1;
  int pred_index = -1;
  double dice = 0.0;
};

struct DetectionReport {
  int tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::vector<Match> matches;
};

inline DetectionReport detection_from_counts(int tp, int fp, int fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw DataError("negative counts");
  DetectionReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// One-to-one detection matching: a prediction counts as a hit only with
// dice >= 0.1 against its paired ground-truth tumor. Ground-truth tumors
// are processed in descending order of their best achievable dice; each
// takes its highest-dice still-unmatched prediction.
inline DetectionReport match_detections(const ComponentSet& pred,
                                        const ComponentSet& gt,
                                        double dice_threshold = 0.1) {
  if (pred.dims != gt.dims)
    throw DataError("component sets come from different grids");
  const size_t np = pred.components.size(), ng = gt.components.size();

  std::vector<std::vector<double>> d(ng, std::vector<double>(np, 0.0));
  std::vector<double> best(ng, 0.0);
  for (size_t g = 0; g < ng; ++g)
    for (size_t p = 0; p < np; ++p) {
      d[g][p] = component_dice(gt.components[g], pred.components[p]);
      best[g] = std::max(best[g], d[g][p]);
    }

  std::vector<size_t> order(ng);
  for (size_t g = 0; g < ng; ++g) order[g] = g;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (best[a] != best[b]) return best[a] > best[b];
    return a < b;
  });

  std::vector<bool> taken(np, false);
  DetectionReport r;
  for (size_t g : order) {
    int chosen = -1;
    double chosen_dice = dice_threshold;  // must be >= threshold
    for (size_t p = 0; p < np; ++p) {
      if (taken[p]) continue;
      if (d[g][p] > chosen_dice ||
          (d[g][p] == chosen_dice && d[g][p] >= dice_threshold && chosen < 0)) {
        chosen = static_cast<int>(p);
        chosen_dice = d[g][p];
      }
    }
    if (chosen >= 0) {
      taken[static_cast<size_t>(chosen)] = true;
      r.matches.push_back(
          {static_cast<int>(g), chosen, d[g][static_cast<size_t>(chosen)]});
    }
  }
  r.tp = static_cast<int>(r.matches.size());
  r.fn = static_cast<int>(ng) - r.tp;
  r.fp = static_cast<int>(np) - r.tp;
  const auto counts = detection_from_counts(r.tp, r.fp, r.fn);
  r.precision = counts.precision;
  r.recall = counts.recall;
  r.f1 = counts.f1;
  return r;
}

}  // namespace crlm::metrics
