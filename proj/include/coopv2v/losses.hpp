#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coopv2v/tensor.hpp"

namespace coopv2v {

inline constexpr double kProbFloor = 1e-12;

/// Focal / detection loss weights.
struct LossParams {
  double alpha = 0.25;   // focal balance weight
  double gamma = 2.0;    // focal focusing exponent
  double beta_reg = 2.0;
  double beta_cls = 1.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("LossParams: alpha must lie in (0,1)");
    if (!(gamma >= 0.0))
      throw std::invalid_argument("LossParams: gamma must be >= 0");
    if (!(beta_reg > 0.0) || !(beta_cls > 0.0))
      throw std::invalid_argument("LossParams: beta_reg/beta_cls must be > 0");
  }
};

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
inline double smooth_l1(double x) {
  double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  double a = std::abs(x);
  return a < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0);
}

/// -alpha (1-q)^gamma log q, with q floored at kProbFloor before the log.
inline double focal_loss(double q_pred, const LossParams& p) {
  double q = std::max(q_pred, kProbFloor);
  return -p.alpha * std::pow(1.0 - q_pred, p.gamma) * std::log(q);
}

/// sum p log(p/q) with the 0 log 0 = 0 convention; q floored at kProbFloor.
/// Both inputs must be distributions: same shape, entries >= 0, sum 1
/// within 1e-6.
inline double kl_divergence(const Tensor& p, const Tensor& q) {
  if (!p.same_shape(q))
    throw std::invalid_argument("kl_divergence: shape mismatch " +
                                shape_str(p.shape) + " vs " +
                                shape_str(q.shape));
  double sp = 0.0, sq = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0)
      throw std::invalid_argument("kl_divergence: negative entry");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
    throw std::invalid_argument("kl_divergence: inputs must each sum to 1");
  double kl = 0.0;
  for (std::int64_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
  }
  // Floored q entries can push the sum a hair below zero when p ~ q.
  return std::max(kl, 0.0);
}

}  // namespace coopv2v
