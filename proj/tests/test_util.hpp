#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "coopv2v/coopv2v.hpp"

namespace testutil {

using namespace coopv2v;

inline Tensor random_tensor(const std::vector<int>& shape, Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Pushes values within `margin` of `point` away from it, keeping finite
/// difference probes off kinks (relu at 0, smooth-L1 at +-1).
inline void nudge_away(Tensor& t, double point, double margin) {
  for (double& v : t.data)
    if (std::abs(v - point) < margin)
      v = point + (v >= point ? margin : -margin) * 2.0;
}

inline double rel_err(double a, double b) {
  double m = std::max(std::abs(a), std::abs(b));
  if (m < 1e-7) return 0.0;
  return std::abs(a - b) / m;
}

/// Central finite differences against analytic leaf gradients. The builder
/// receives a fresh tape plus variable nodes aligned with `inputs` and
/// returns the scalar loss node.
template <class Build>
double fd_max_rel(std::vector<Tensor> inputs, Build build, double eps = 1e-3) {
  auto eval = [&](const std::vector<Tensor>& in) {
    Tape t;
    std::vector<NodeId> vars;
    for (const Tensor& x : in) vars.push_back(t.variable(x));
    return t.value(build(t, vars))[0];
  };
  Tape t;
  std::vector<NodeId> vars;
  for (const Tensor& x : inputs) vars.push_back(t.variable(x));
  NodeId loss = build(t, vars);
  t.backward(loss);

  double worst = 0.0;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    for (std::int64_t i = 0; i < inputs[v].size(); ++i) {
      std::vector<Tensor> in = inputs;
      in[v][i] += eps;
      double lp = eval(in);
      in[v][i] -= 2.0 * eps;
      double lm = eval(in);
      double fd = (lp - lm) / (2.0 * eps);
      worst = std::max(worst, rel_err(fd, t.grad(vars[v])[i]));
    }
  }
  return worst;
}

/// Finite differences over named ParamStore entries. `loss_of` runs a
/// fresh forward pass; analytic gradients must already sit in the store.
inline double fd_params_max_rel(ParamStore& ps,
                                const std::vector<std::string>& names,
                                const std::function<double()>& loss_of,
                                double eps = 1e-3) {
  std::map<std::string, Tensor> analytic;
  for (const std::string& n : names) analytic.emplace(n, ps.get(n).grad);
  double worst = 0.0;
  for (const std::string& n : names) {
    Param& p = ps.get(n);
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      double orig = p.value[i];
      p.value[i] = orig + eps;
      double lp = loss_of();
      p.value[i] = orig - eps;
      double lm = loss_of();
      p.value[i] = orig;
      double fd = (lp - lm) / (2.0 * eps);
      worst = std::max(worst, rel_err(fd, analytic.at(n)[i]));
    }
  }
  return worst;
}

}  // namespace testutil
