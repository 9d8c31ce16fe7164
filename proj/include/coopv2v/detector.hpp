#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "coopv2v/autodiff.hpp"
#include "coopv2v/metrics.hpp"
#include "coopv2v/nn.hpp"
#include "coopv2v/scene.hpp"

namespace coopv2v {

/// Cell-centered prior box. One anchor per head cell, yaw 0, sized at the
/// generator's mean object dimensions.
struct Anchor {
  double x = 0, y = 0, z = 0.75;
  double w = 1.9, l = 4.2, h = 1.5;
  double theta = 0.0;

  double diag() const { return std::hypot(w, l); }
  Box as_box() const { return Box{x, y, z, w, l, h, theta}; }
};

struct AnchorGrid {
  int cells = 16;
  double cell_size = 4.0;
  std::vector<Anchor> anchors;  // row-major (cy, cx)

  const Anchor& at(int cy, int cx) const {
    return anchors[static_cast<std::size_t>(cy) * cells + cx];
  }
};

inline AnchorGrid make_anchor_grid(double world, int cells = 16) {
  AnchorGrid grid;
  grid.cells = cells;
  grid.cell_size = world / cells;
  grid.anchors.resize(static_cast<std::size_t>(cells) * cells);
  for (int cy = 0; cy < cells; ++cy)
    for (int cx = 0; cx < cells; ++cx) {
      Anchor a;
      a.x = (cx + 0.5) * grid.cell_size;
      a.y = (cy + 0.5) * grid.cell_size;
      grid.anchors[static_cast<std::size_t>(cy) * cells + cx] = a;
    }
  return grid;
}

/// Residual encoding of a ground-truth box against an anchor:
/// centers normalized by the anchor diagonal (height by the anchor
/// height), log size ratios, sine of the yaw difference.
inline std::array<double, 7> box_residuals(const Box& gt, const Anchor& a) {
  if (!(gt.w > 0 && gt.l > 0 && gt.h > 0))
    throw std::invalid_argument("box_residuals: nonpositive ground-truth size");
  if (!(a.w > 0 && a.l > 0 && a.h > 0))
    throw std::invalid_argument("box_residuals: nonpositive anchor size");
  double d = a.diag();
  return {(gt.x - a.x) / d,       (gt.y - a.y) / d, (gt.z - a.z) / a.h,
          std::log(gt.w / a.w),   std::log(gt.l / a.l),
          std::log(gt.h / a.h),   std::sin(gt.theta - a.theta)};
}

inline Box decode_residuals(const std::array<double, 7>& r, const Anchor& a) {
  double d = a.diag();
  Box b;
  b.x = a.x + r[0] * d;
  b.y = a.y + r[1] * d;
  b.z = a.z + r[2] * a.h;
  b.w = a.w * std::exp(r[3]);
  b.l = a.l * std::exp(r[4]);
  b.h = a.h * std::exp(r[5]);
  b.theta = a.theta + std::asin(std::clamp(r[6], -1.0, 1.0));
  return b;
}

struct Detection {
  Box box;
  double score = 0.0;  // objectness probability
  int cell = 0;
};

/// Decodes a head output pair into one detection per cell.
inline std::vector<Detection> decode_head(const Tensor& obj_logits,
                                          const Tensor& residuals,
                                          const AnchorGrid& grid) {
  int cells = grid.cells;
  if (obj_logits.rank() != 3 || obj_logits.dim(0) != 1 ||
      obj_logits.dim(1) != cells || obj_logits.dim(2) != cells ||
      residuals.rank() != 3 || residuals.dim(0) != 7)
    throw std::invalid_argument("decode_head: unexpected head shapes");
  std::vector<Detection> out;
  out.reserve(static_cast<std::size_t>(cells) * cells);
  std::int64_t ncell = static_cast<std::int64_t>(cells) * cells;
  for (int cy = 0; cy < cells; ++cy)
    for (int cx = 0; cx < cells; ++cx) {
      std::int64_t cell = static_cast<std::int64_t>(cy) * cells + cx;
      std::array<double, 7> r;
      for (int j = 0; j < 7; ++j) r[j] = residuals[j * ncell + cell];
      Detection det;
      det.box = decode_residuals(r, grid.at(cy, cx));
      det.score = stable_sigmoid(obj_logits[cell]);
      det.cell = static_cast<int>(cell);
      out.push_back(det);
    }
  return out;
}

/// SSD-style assignment: every ground truth claims its best-ranked free
/// anchor (IoU first, center distance as tie-break), anchors above the
/// positive threshold join in, anchors at or below the negative threshold
/// with no positive role become negatives, the rest are ignored.
inline DetectionTargets assign_anchors(const std::vector<Box>& gts,
                                       const AnchorGrid& grid,
                                       double pos_iou = 0.5,
                                       double neg_iou = 0.3) {
  int ncell = grid.cells * grid.cells;
  DetectionTargets t;
  std::vector<double> best_iou(static_cast<std::size_t>(ncell), 0.0);
  std::vector<int> best_gt(static_cast<std::size_t>(ncell), -1);
  std::vector<int> assigned(static_cast<std::size_t>(ncell), -1);

  for (std::size_t g = 0; g < gts.size(); ++g) {
    for (int c = 0; c < ncell; ++c) {
      double iou = bev_iou(gts[g], grid.anchors[static_cast<std::size_t>(c)].as_box());
      if (iou > best_iou[static_cast<std::size_t>(c)]) {
        best_iou[static_cast<std::size_t>(c)] = iou;
        best_gt[static_cast<std::size_t>(c)] = static_cast<int>(g);
      }
    }
  }

  // forced match: each gt takes its best free anchor
  for (std::size_t g = 0; g < gts.size(); ++g) {
    int best_cell = -1;
    double best_score = -1.0;
    double best_dist = 0.0;
    for (int c = 0; c < ncell; ++c) {
      if (assigned[static_cast<std::size_t>(c)] >= 0) continue;
      const Anchor& a = grid.anchors[static_cast<std::size_t>(c)];
      double iou = bev_iou(gts[g], a.as_box());
      double dist = std::hypot(gts[g].x - a.x, gts[g].y - a.y);
      if (best_cell < 0 || iou > best_score ||
          (iou == best_score && dist < best_dist)) {
        best_cell = c;
        best_score = iou;
        best_dist = dist;
      }
    }
    if (best_cell >= 0) assigned[static_cast<std::size_t>(best_cell)] = static_cast<int>(g);
  }
  // threshold positives keep their argmax ground truth
  for (int c = 0; c < ncell; ++c)
    if (assigned[static_cast<std::size_t>(c)] < 0 &&
        best_iou[static_cast<std::size_t>(c)] >= pos_iou)
      assigned[static_cast<std::size_t>(c)] = best_gt[static_cast<std::size_t>(c)];

  for (int c = 0; c < ncell; ++c) {
    int cy = c / grid.cells, cx = c % grid.cells;
    if (assigned[static_cast<std::size_t>(c)] >= 0) {
      t.pos_cells.push_back(c);
      t.pos_residuals.push_back(box_residuals(
          gts[static_cast<std::size_t>(assigned[static_cast<std::size_t>(c)])],
          grid.at(cy, cx)));
    } else if (best_iou[static_cast<std::size_t>(c)] <= neg_iou) {
      t.neg_cells.push_back(c);
    }
  }
  return t;
}

/// Encoder + attention fusion + SSD-like head for the bird's-eye toy task.
/// The encoder is shared by every agent; input rasters are (1,64,64) and
/// the feature maps are (8,16,16).
struct PerceptionModel {
  ParamStore params;
  ConvBnRelu enc1{"enc1", 1, 8, 2};
  ConvBnRelu enc2{"enc2", 8, 8, 2};
  ConvBnRelu enc3{"enc3", 8, 8, 1};
  Conv2dLayer head_trunk{"head.trunk", 8, 16, 3, 1, 1};
  Conv2dLayer head_obj{"head.obj", 16, 1, 1, 1, 0};
  Conv2dLayer head_reg{"head.reg", 16, 7, 1, 1, 0};

  static constexpr int kRaster = 64;
  static constexpr int kFeatChannels = 8;
  static constexpr int kFeatCells = 16;

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x6d6f64656cull));
    enc1.init(params, rng);
    enc2.init(params, rng);
    enc3.init(params, rng);
    head_trunk.init(params, rng);
    head_obj.init(params, rng);
    head_reg.init(params, rng);
  }

  NodeId encode(Tape& t, const Tensor& raster, bool train) {
    if (raster.rank() != 3 || raster.dim(0) != 1 || raster.dim(1) != kRaster ||
        raster.dim(2) != kRaster)
      throw std::invalid_argument("encode: expected raster (1,64,64), got " +
                                  shape_str(raster.shape));
    NodeId x = t.constant(raster);
    x = enc1.apply(t, params, x, train);
    x = enc2.apply(t, params, x, train);
    x = enc3.apply(t, params, x, train);
    return x;
  }

  std::pair<NodeId, NodeId> head(Tape& t, NodeId fused) {
    NodeId trunk = t.relu(head_trunk.apply(t, params, fused));
    NodeId logits = head_obj.apply(t, params, trunk);
    NodeId residuals = head_reg.apply(t, params, trunk);
    return {logits, residuals};
  }

  Tensor encode_eval(const Tensor& raster) {
    Tape t;
    return t.value(encode(t, raster, false));
  }
};

}  // namespace coopv2v
