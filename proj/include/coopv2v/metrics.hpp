#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "coopv2v/scene.hpp"

namespace coopv2v {

/// Axis-aligned bird's-eye IoU over (x, y, l, w); yaw is evaluated at 0
/// for metric purposes.
inline double bev_iou(const Box& a, const Box& b) {
  if (!(a.w > 0 && a.l > 0 && b.w > 0 && b.l > 0))
    throw std::invalid_argument("bev_iou: boxes must have positive sizes");
  double ix = std::max(
      0.0, std::min(a.x + 0.5 * a.l, b.x + 0.5 * b.l) -
               std::max(a.x - 0.5 * a.l, b.x - 0.5 * b.l));
  double iy = std::max(
      0.0, std::min(a.y + 0.5 * a.w, b.y + 0.5 * b.w) -
               std::max(a.y - 0.5 * a.w, b.y - 0.5 * b.w));
  double inter = ix * iy;
  double uni = a.w * a.l + b.w * b.l - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// A detection pinned to the evaluation frame it came from.
struct ScoredDetection {
  Box box;
  double score = 0.0;
  int frame = 0;
  int rank_hint = 0;  // deterministic tie-break within equal scores
};

struct ApDiagnostics {
  std::int64_t empty_both = 0;  // frames with neither gt nor detections
};

/// All-point interpolated average precision with greedy score-ordered
/// matching; each ground truth matches at most one detection within its
/// frame. Conventions: no ground truth anywhere and no detections -> 1;
/// detections against an empty ground truth -> 0.
inline double average_precision(std::vector<ScoredDetection> dets,
                                const std::vector<std::vector<Box>>& gt_frames,
                                double iou_threshold,
                                ApDiagnostics* diag = nullptr) {
  std::int64_t total_gt = 0;
  for (const auto& g : gt_frames) total_gt += static_cast<std::int64_t>(g.size());
  if (total_gt == 0) {
    if (diag && dets.empty()) ++diag->empty_both;
    return dets.empty() ? 1.0 : 0.0;
  }
  std::sort(dets.begin(), dets.end(),
            [](const ScoredDetection& a, const ScoredDetection& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.frame != b.frame) return a.frame < b.frame;
              return a.rank_hint < b.rank_hint;
            });
  std::vector<std::vector<char>> taken(gt_frames.size());
  for (std::size_t f = 0; f < gt_frames.size(); ++f)
    taken[f].assign(gt_frames[f].size(), 0);

  std::vector<double> precision, recall;
  std::int64_t tp = 0, fp = 0;
  for (const ScoredDetection& d : dets) {
    if (d.frame < 0 || static_cast<std::size_t>(d.frame) >= gt_frames.size())
      throw std::out_of_range("average_precision: detection frame out of range");
    const auto& gts = gt_frames[static_cast<std::size_t>(d.frame)];
    double best_iou = 0.0;
    int best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[static_cast<std::size_t>(d.frame)][g]) continue;
      double iou = bev_iou(d.box, gts[g]);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(d.frame)][static_cast<std::size_t>(best)] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }
  if (precision.empty()) return 0.0;

  // precision envelope, then area under the stepwise curve
  for (std::size_t i = precision.size() - 1; i-- > 0;)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  double prev_r = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

}  // namespace coopv2v
