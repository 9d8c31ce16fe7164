#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coopv2v/losses.hpp"
#include "coopv2v/param_store.hpp"
#include "coopv2v/tensor.hpp"

namespace coopv2v {

using NodeId = std::int32_t;

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

/// Anchor-to-target assignment consumed by the detection loss: positive
/// head cells with their encoded residual targets, and the negative cells.
/// Cells in neither list are ignored.
struct DetectionTargets {
  std::vector<int> pos_cells;
  std::vector<std::array<double, 7>> pos_residuals;
  std::vector<int> neg_cells;
};

/// Recorded-graph reverse-mode differentiation. Ops append nodes in forward
/// order, so creation order is a topological order and backward() is a
/// single reverse sweep. Gradients of trainable leaves accumulate into the
/// bound ParamStore entries; node-local gradients stay readable per node.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(Tensor v) { return push(std::move(v), false); }

  /// Differentiable leaf not tied to a ParamStore (inputs under test).
  NodeId variable(Tensor v) { return push(std::move(v), true); }

  NodeId param(Param& p) {
    NodeId id = push(p.value, p.trainable);
    if (p.trainable) {
      Param* pp = &p;
      nodes_[id].backprop = [this, id, pp]() {
        const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
        for (std::int64_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
      };
    }
    return id;
  }

  const Tensor& value(NodeId id) const { return node(id).value; }
  const Tensor& grad(NodeId id) const { return node(id).grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // ---- elementwise / structural ----

  NodeId add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb))
      throw std::invalid_argument("add: shape mismatch " + shape_str(va.shape) +
                                  " vs " + shape_str(vb.shape));
    Tensor out = va;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(id).requires_grad) {
      bool ra = needs_grad(a), rb = needs_grad(b);
      nodes_[id].backprop = [this, id, a, b, ra, rb]() {
        const Tensor& g = node(id).grad;
        if (ra)
          for (std::int64_t i = 0; i < g.size(); ++i) gref(a)[i] += g[i];
        if (rb)
          for (std::int64_t i = 0; i < g.size(); ++i) gref(b)[i] += g[i];
      };
    }
    return id;
  }

  NodeId scale_const(NodeId a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    NodeId id = push(std::move(out), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a, c]() {
        const Tensor& g = node(id).grad;
        for (std::int64_t i = 0; i < g.size(); ++i) gref(a)[i] += c * g[i];
      };
    }
    return id;
  }

  NodeId sum(NodeId a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    NodeId id = push(Tensor::scalar(s), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a]() {
        double g = node(id).grad[0];
        Tensor& ga = gref(a);
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
      };
    }
    return id;
  }

  /// Fixed-coefficient contraction to a scalar.
  NodeId weighted_sum(NodeId a, Tensor weights) {
    const Tensor& va = value(a);
    if (!va.same_shape(weights))
      throw std::invalid_argument("weighted_sum: shape mismatch " +
                                  shape_str(va.shape) + " vs " +
                                  shape_str(weights.shape));
    double s = 0.0;
    for (std::int64_t i = 0; i < va.size(); ++i) s += va[i] * weights[i];
    NodeId id = push(Tensor::scalar(s), needs_grad(a));
    if (node(id).requires_grad) {
      Tensor w = std::move(weights);
      nodes_[id].backprop = [this, id, a, w]() {
        double g = node(id).grad[0];
        Tensor& ga = gref(a);
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
      };
    }
    return id;
  }

  NodeId pick(NodeId a, std::int64_t index) {
    const Tensor& va = value(a);
    if (index < 0 || index >= va.size())
      throw std::out_of_range("pick: index out of range");
    NodeId id = push(Tensor::scalar(va[index]), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a, index]() {
        gref(a)[index] += node(id).grad[0];
      };
    }
    return id;
  }

  NodeId relu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    NodeId id = push(std::move(out), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a]() {
        const Tensor& g = node(id).grad;
        const Tensor& x = value(a);
        Tensor& ga = gref(a);
        for (std::int64_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) ga[i] += g[i];
      };
    }
    return id;
  }

  NodeId sigmoid(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = stable_sigmoid(v);
    NodeId id = push(std::move(out), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a]() {
        const Tensor& g = node(id).grad;
        const Tensor& s = value(id);
        Tensor& ga = gref(a);
        for (std::int64_t i = 0; i < g.size(); ++i)
          ga[i] += g[i] * s[i] * (1.0 - s[i]);
      };
    }
    return id;
  }

  NodeId flatten(NodeId a) {
    Tensor out(std::vector<int>{static_cast<int>(value(a).size())});
    out.data = value(a).data;
    NodeId id = push(std::move(out), needs_grad(a));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, a]() {
        const Tensor& g = node(id).grad;
        Tensor& ga = gref(a);
        for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      };
    }
    return id;
  }

  NodeId concat_channels(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 3 || vb.rank() != 3 || va.dim(1) != vb.dim(1) ||
        va.dim(2) != vb.dim(2))
      throw std::invalid_argument("concat_channels: incompatible shapes " +
                                  shape_str(va.shape) + " vs " +
                                  shape_str(vb.shape));
    Tensor out({va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(va.size()));
    NodeId id = push(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(id).requires_grad) {
      bool ra = needs_grad(a), rb = needs_grad(b);
      std::int64_t na = va.size();
      nodes_[id].backprop = [this, id, a, b, ra, rb, na]() {
        const Tensor& g = node(id).grad;
        if (ra) {
          Tensor& ga = gref(a);
          for (std::int64_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (rb) {
          Tensor& gb = gref(b);
          for (std::int64_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
        }
      };
    }
    return id;
  }

  /// Broadcast multiply of a scalar node over a tensor node.
  NodeId scale_by(NodeId s, NodeId x) {
    if (value(s).size() != 1)
      throw std::invalid_argument("scale_by: scale must be a scalar node");
    double sv = value(s)[0];
    Tensor out = value(x);
    for (double& v : out.data) v *= sv;
    NodeId id = push(std::move(out), needs_grad(s) || needs_grad(x));
    if (node(id).requires_grad) {
      bool rs = needs_grad(s), rx = needs_grad(x);
      nodes_[id].backprop = [this, id, s, x, rs, rx, sv]() {
        const Tensor& g = node(id).grad;
        const Tensor& vx = value(x);
        if (rs) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * vx[i];
          gref(s)[0] += acc;
        }
        if (rx) {
          Tensor& gx = gref(x);
          for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
        }
      };
    }
    return id;
  }

  // ---- dense / conv / batchnorm ----

  NodeId dense(NodeId x, NodeId w, NodeId b) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(b);
    if (vx.rank() != 1 || vw.rank() != 2 || vb.rank() != 1 ||
        vw.dim(1) != vx.dim(0) || vb.dim(0) != vw.dim(0))
      throw std::invalid_argument("dense: shape mismatch x" +
                                  shape_str(vx.shape) + " w" +
                                  shape_str(vw.shape) + " b" +
                                  shape_str(vb.shape));
    int m = vw.dim(0), n = vw.dim(1);
    Tensor out({m});
    for (int r = 0; r < m; ++r) {
      double acc = vb[r];
      const double* wr = vw.data.data() + static_cast<std::size_t>(r) * n;
      for (int c = 0; c < n; ++c) acc += wr[c] * vx[c];
      out[r] = acc;
    }
    NodeId id = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b));
    if (node(id).requires_grad) {
      bool rx = needs_grad(x), rw = needs_grad(w), rb = needs_grad(b);
      nodes_[id].backprop = [this, id, x, w, b, rx, rw, rb, m, n]() {
        const Tensor& g = node(id).grad;
        const Tensor& vx = value(x);
        const Tensor& vw = value(w);
        for (int r = 0; r < m; ++r) {
          double gr = g[r];
          if (gr == 0.0) continue;
          if (rb) gref(b)[r] += gr;
          const double* wr = vw.data.data() + static_cast<std::size_t>(r) * n;
          double* gwr = rw ? gref(w).data.data() + static_cast<std::size_t>(r) * n
                           : nullptr;
          Tensor* gx = rx ? &gref(x) : nullptr;
          for (int c = 0; c < n; ++c) {
            if (gx) (*gx)[c] += gr * wr[c];
            if (gwr) gwr[c] += gr * vx[c];
          }
        }
      };
    }
    return id;
  }

  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad) {
    const Tensor& vx = value(x);
    const Tensor& vw = value(w);
    const Tensor& vb = value(b);
    if (vx.rank() != 3 || vw.rank() != 4 || vb.rank() != 1)
      throw std::invalid_argument("conv2d: expected x(C,H,W) w(O,I,Kh,Kw) "
                                  "b(O), got x" +
                                  shape_str(vx.shape) + " w" +
                                  shape_str(vw.shape));
    if (vw.dim(1) != vx.dim(0) || vb.dim(0) != vw.dim(0))
      throw std::invalid_argument("conv2d: shape mismatch between input " +
                                  shape_str(vx.shape) + " and kernel " +
                                  shape_str(vw.shape));
    if (stride < 1 || pad < 0)
      throw std::invalid_argument("conv2d: invalid stride/pad");
    int ci = vx.dim(0), h = vx.dim(1), wd = vx.dim(2);
    int co = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
    if (kh > h + 2 * pad || kw > wd + 2 * pad)
      throw std::invalid_argument("conv2d: kernel " + shape_str(vw.shape) +
                                  " exceeds padded input " +
                                  shape_str(vx.shape));
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor out({co, ho, wo});
    for (int oc = 0; oc < co; ++oc) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          double acc = vb[oc];
          int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
          for (int ic = 0; ic < ci; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
              int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                int ix = ix0 + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += vw.at4(oc, ic, ky, kx) * vx.at(ic, iy, ix);
              }
            }
          }
          out.at(oc, oy, ox) = acc;
        }
      }
    }
    NodeId id = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b));
    if (node(id).requires_grad) {
      bool rx = needs_grad(x), rw = needs_grad(w), rb = needs_grad(b);
      nodes_[id].backprop = [this, id, x, w, b, rx, rw, rb, stride, pad, ci, h,
                             wd, co, kh, kw, ho, wo]() {
        const Tensor& g = node(id).grad;
        const Tensor& vx = value(x);
        const Tensor& vw = value(w);
        for (int oc = 0; oc < co; ++oc) {
          for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
              double gv = g.at(oc, oy, ox);
              if (gv == 0.0) continue;
              if (rb) gref(b)[oc] += gv;
              int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
              for (int ic = 0; ic < ci; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = iy0 + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ix0 + kx;
                    if (ix < 0 || ix >= wd) continue;
                    if (rx) gref(x).at(ic, iy, ix) += gv * vw.at4(oc, ic, ky, kx);
                    if (rw) gref(w).at4(oc, ic, ky, kx) += gv * vx.at(ic, iy, ix);
                  }
                }
              }
            }
          }
        }
      };
    }
    return id;
  }

  /// Spatial batch normalization over one (C,H,W) map. Train mode uses the
  /// per-channel batch moments and folds them into the running stats held
  /// by the (non-trainable) Params; eval mode reads the running stats.
  NodeId batchnorm2d(NodeId x, NodeId gamma, NodeId beta, Param& running_mean,
                     Param& running_var, double momentum, double eps,
                     bool train) {
    const Tensor& vx = value(x);
    if (vx.rank() != 3)
      throw std::invalid_argument("batchnorm2d: expected (C,H,W) input, got " +
                                  shape_str(vx.shape));
    int c = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
    auto check_ch = [&](const Tensor& t, const char* what) {
      if (t.rank() != 1 || t.dim(0) != c)
        throw std::invalid_argument(std::string("batchnorm2d: ") + what +
                                    " channel count " + shape_str(t.shape) +
                                    " does not match input " +
                                    shape_str(vx.shape));
    };
    check_ch(value(gamma), "gamma");
    check_ch(value(beta), "beta");
    check_ch(running_mean.value, "running mean");
    check_ch(running_var.value, "running var");

    std::int64_t n = static_cast<std::int64_t>(h) * w;
    std::vector<double> mean(c), inv_std(c);
    if (train) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) s += vx.at(ch, y, xx);
        double m = s / static_cast<double>(n);
        double sv = 0.0;
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            double d = vx.at(ch, y, xx) - m;
            sv += d * d;
          }
        double var = sv / static_cast<double>(n);
        mean[ch] = m;
        inv_std[ch] = 1.0 / std::sqrt(var + eps);
        double unbiased =
            n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1)
                  : var;
        running_mean.value[ch] =
            (1.0 - momentum) * running_mean.value[ch] + momentum * m;
        running_var.value[ch] =
            (1.0 - momentum) * running_var.value[ch] + momentum * unbiased;
      }
    } else {
      for (int ch = 0; ch < c; ++ch) {
        mean[ch] = running_mean.value[ch];
        inv_std[ch] = 1.0 / std::sqrt(running_var.value[ch] + eps);
      }
    }

    const Tensor& vg = value(gamma);
    const Tensor& vbeta = value(beta);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(ch, y, xx) =
              vg[ch] * (vx.at(ch, y, xx) - mean[ch]) * inv_std[ch] + vbeta[ch];

    NodeId id =
        push(std::move(out), needs_grad(x) || needs_grad(gamma) || needs_grad(beta));
    if (node(id).requires_grad) {
      bool rx = needs_grad(x), rg = needs_grad(gamma), rb = needs_grad(beta);
      nodes_[id].backprop = [this, id, x, gamma, beta, rx, rg, rb, c, h, w, n,
                             mean, inv_std, train]() {
        const Tensor& g = node(id).grad;
        const Tensor& vx = value(x);
        const Tensor& vg = value(gamma);
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
              double xhat = (vx.at(ch, y, xx) - mean[ch]) * inv_std[ch];
              double gv = g.at(ch, y, xx);
              sum_g += gv;
              sum_gx += gv * xhat;
            }
          if (rg) gref(gamma)[ch] += sum_gx;
          if (rb) gref(beta)[ch] += sum_g;
          if (rx) {
            double mg = sum_g / static_cast<double>(n);
            double mgx = sum_gx / static_cast<double>(n);
            for (int y = 0; y < h; ++y)
              for (int xx = 0; xx < w; ++xx) {
                double xhat = (vx.at(ch, y, xx) - mean[ch]) * inv_std[ch];
                double gv = g.at(ch, y, xx);
                if (train)
                  gref(x).at(ch, y, xx) +=
                      vg[ch] * inv_std[ch] * (gv - mg - xhat * mgx);
                else
                  gref(x).at(ch, y, xx) += vg[ch] * inv_std[ch] * gv;
              }
          }
        }
      };
    }
    return id;
  }

  // ---- softmax / divergence / losses ----

  NodeId softmax(NodeId x, int axis) {
    const Tensor& vx = value(x);
    if (axis < 0 || axis >= vx.rank())
      throw std::invalid_argument("softmax: invalid axis");
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= vx.dim(i);
    for (int i = axis + 1; i < vx.rank(); ++i) inner *= vx.dim(i);
    std::int64_t nred = vx.dim(axis);
    Tensor out = vx;
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        std::int64_t base = o * nred * inner + in;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < nred; ++k)
          mx = std::max(mx, vx[base + k * inner]);
        double z = 0.0;
        for (std::int64_t k = 0; k < nred; ++k) {
          double e = std::exp(vx[base + k * inner] - mx);
          out[base + k * inner] = e;
          z += e;
        }
        for (std::int64_t k = 0; k < nred; ++k) out[base + k * inner] /= z;
      }
    }
    NodeId id = push(std::move(out), needs_grad(x));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, x, outer, inner, nred]() {
        const Tensor& g = node(id).grad;
        const Tensor& p = value(id);
        Tensor& gx = gref(x);
        for (std::int64_t o = 0; o < outer; ++o) {
          for (std::int64_t in = 0; in < inner; ++in) {
            std::int64_t base = o * nred * inner + in;
            double dot = 0.0;
            for (std::int64_t k = 0; k < nred; ++k)
              dot += g[base + k * inner] * p[base + k * inner];
            for (std::int64_t k = 0; k < nred; ++k)
              gx[base + k * inner] +=
                  p[base + k * inner] * (g[base + k * inner] - dot);
          }
        }
      };
    }
    return id;
  }

  /// Softmax over every element of the tensor, whatever its shape.
  NodeId softmax_flat(NodeId x) { return softmax(flatten(x), 0); }

  NodeId kl_div(NodeId p, NodeId q) {
    double v = kl_divergence(value(p), value(q));  // also runs the checks
    NodeId id = push(Tensor::scalar(v), needs_grad(p) || needs_grad(q));
    if (node(id).requires_grad) {
      bool rp = needs_grad(p), rq = needs_grad(q);
      nodes_[id].backprop = [this, id, p, q, rp, rq]() {
        double g = node(id).grad[0];
        const Tensor& vp = value(p);
        const Tensor& vq = value(q);
        for (std::int64_t i = 0; i < vp.size(); ++i) {
          double qc = std::max(vq[i], kProbFloor);
          if (rp)
            gref(p)[i] += g * (std::log(std::max(vp[i], kProbFloor) / qc) + 1.0);
          if (rq && vq[i] >= kProbFloor) gref(q)[i] += g * (-vp[i] / qc);
        }
      };
    }
    return id;
  }

  /// sum_i smooth_l1(x_i) as a scalar node.
  NodeId smooth_l1_sum(NodeId x) {
    double s = 0.0;
    for (double v : value(x).data) s += smooth_l1(v);
    NodeId id = push(Tensor::scalar(s), needs_grad(x));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, x]() {
        double g = node(id).grad[0];
        const Tensor& vx = value(x);
        Tensor& gx = gref(x);
        for (std::int64_t i = 0; i < vx.size(); ++i)
          gx[i] += g * smooth_l1_grad(vx[i]);
      };
    }
    return id;
  }

  /// sum_i -alpha (1-q_i)^gamma log q_i over a tensor of probabilities.
  NodeId focal_sum(NodeId q, const LossParams& lp) {
    double s = 0.0;
    for (double v : value(q).data) s += focal_loss(v, lp);
    NodeId id = push(Tensor::scalar(s), needs_grad(q));
    if (node(id).requires_grad) {
      double alpha = lp.alpha, gamma = lp.gamma;
      nodes_[id].backprop = [this, id, q, alpha, gamma]() {
        double g = node(id).grad[0];
        const Tensor& vq = value(q);
        Tensor& gq = gref(q);
        for (std::int64_t i = 0; i < vq.size(); ++i) {
          double qv = std::clamp(vq[i], kProbFloor, 1.0 - 1e-12);
          double t1 = gamma > 0.0
                          ? alpha * gamma * std::pow(1.0 - qv, gamma - 1.0) *
                                std::log(qv)
                          : 0.0;
          double t2 = -alpha * std::pow(1.0 - qv, gamma) / qv;
          gq[i] += g * (t1 + t2);
        }
      };
    }
    return id;
  }

  /// Scaled dot-product attention per spatial location: agents[0] is the
  /// ego map and supplies the query; all maps act as keys and values.
  /// Attention coefficients are softmax(q . k / sqrt(C)) over agents.
  NodeId attentive_fuse(const std::vector<NodeId>& agents) {
    if (agents.empty())
      throw std::invalid_argument("attentive_fuse: no agent features");
    if (agents.size() == 1) return agents[0];
    const Tensor& ego = value(agents[0]);
    if (ego.rank() != 3)
      throw std::invalid_argument("attentive_fuse: expected (C,H,W) maps");
    for (NodeId a : agents)
      if (!value(a).same_shape(ego))
        throw std::invalid_argument("attentive_fuse: shape mismatch " +
                                    shape_str(value(a).shape) + " vs " +
                                    shape_str(ego.shape));
    int na = static_cast<int>(agents.size());
    int c = ego.dim(0), h = ego.dim(1), w = ego.dim(2);
    double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));

    Tensor alphas({na, h, w});
    Tensor out({c, h, w});
    std::vector<double> scores(static_cast<std::size_t>(na));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < na; ++a) {
          double dot = 0.0;
          const Tensor& va = value(agents[a]);
          for (int ch = 0; ch < c; ++ch)
            dot += ego.at(ch, y, x) * va.at(ch, y, x);
          scores[a] = dot * inv_sqrt_c;
          mx = std::max(mx, scores[a]);
        }
        double z = 0.0;
        for (int a = 0; a < na; ++a) {
          scores[a] = std::exp(scores[a] - mx);
          z += scores[a];
        }
        for (int a = 0; a < na; ++a) alphas.at(a, y, x) = scores[a] / z;
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int a = 0; a < na; ++a)
            acc += alphas.at(a, y, x) * value(agents[a]).at(ch, y, x);
          out.at(ch, y, x) = acc;
        }
      }
    }

    bool any = false;
    for (NodeId a : agents) any = any || needs_grad(a);
    NodeId id = push(std::move(out), any);
    if (node(id).requires_grad) {
      std::vector<NodeId> ag = agents;
      nodes_[id].backprop = [this, id, ag, alphas, c, h, w, inv_sqrt_c]() {
        const Tensor& g = node(id).grad;
        int na = static_cast<int>(ag.size());
        const Tensor& ego = value(ag[0]);
        std::vector<double> dalpha(static_cast<std::size_t>(na));
        std::vector<double> ds(static_cast<std::size_t>(na));
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            double dot = 0.0;
            for (int a = 0; a < na; ++a) {
              double acc = 0.0;
              const Tensor& va = value(ag[a]);
              for (int ch = 0; ch < c; ++ch)
                acc += g.at(ch, y, x) * va.at(ch, y, x);
              dalpha[a] = acc;
              dot += alphas.at(a, y, x) * acc;
            }
            for (int a = 0; a < na; ++a)
              ds[a] = alphas.at(a, y, x) * (dalpha[a] - dot);
            for (int a = 0; a < na; ++a) {
              const Tensor& va = value(ag[a]);
              bool ra = needs_grad(ag[a]);
              // value path
              if (ra)
                for (int ch = 0; ch < c; ++ch)
                  gref(ag[a]).at(ch, y, x) +=
                      alphas.at(a, y, x) * g.at(ch, y, x);
              // score paths: query (ego) and key (agent a)
              for (int ch = 0; ch < c; ++ch) {
                double dsv = ds[a] * inv_sqrt_c;
                if (needs_grad(ag[0]))
                  gref(ag[0]).at(ch, y, x) += dsv * va.at(ch, y, x);
                if (ra) gref(ag[a]).at(ch, y, x) += dsv * ego.at(ch, y, x);
              }
            }
          }
        }
      };
    }
    return id;
  }

  /// Detection loss over one head output: smooth-L1 on the residuals of
  /// positive cells plus focal terms on positive/negative objectness,
  /// normalized by the positive count (clamped at 1). Takes the raw
  /// objectness logits; the sigmoid is folded in for stability.
  NodeId detection_loss(NodeId obj_logits, NodeId residuals,
                        const DetectionTargets& t, const LossParams& lp) {
    lp.validate();
    const Tensor& vo = value(obj_logits);
    const Tensor& vr = value(residuals);
    if (vo.rank() != 3 || vo.dim(0) != 1 || vr.rank() != 3 || vr.dim(0) != 7 ||
        vo.dim(1) != vr.dim(1) || vo.dim(2) != vr.dim(2))
      throw std::invalid_argument(
          "detection_loss: expected logits (1,H,W) and residuals (7,H,W), "
          "got " +
          shape_str(vo.shape) + " and " + shape_str(vr.shape));
    if (t.pos_cells.size() != t.pos_residuals.size())
      throw std::invalid_argument("detection_loss: targets inconsistent");
    std::int64_t cells = static_cast<std::int64_t>(vo.dim(1)) * vo.dim(2);
    for (int cell : t.pos_cells)
      if (cell < 0 || cell >= cells)
        throw std::out_of_range("detection_loss: positive cell out of range");
    for (int cell : t.neg_cells)
      if (cell < 0 || cell >= cells)
        throw std::out_of_range("detection_loss: negative cell out of range");

    double n = std::max<std::size_t>(t.pos_cells.size(), 1);
    double l_reg = 0.0, l_cls = 0.0;
    for (std::size_t i = 0; i < t.pos_cells.size(); ++i) {
      int cell = t.pos_cells[i];
      for (int j = 0; j < 7; ++j)
        l_reg += smooth_l1(vr[j * cells + cell] - t.pos_residuals[i][j]);
      double q = std::clamp(stable_sigmoid(vo[cell]), kProbFloor, 1.0 - 1e-12);
      l_cls += -lp.alpha * std::pow(1.0 - q, lp.gamma) * std::log(q);
    }
    for (int cell : t.neg_cells) {
      double q = std::clamp(stable_sigmoid(vo[cell]), kProbFloor, 1.0 - 1e-12);
      l_cls += -(1.0 - lp.alpha) * std::pow(q, lp.gamma) * std::log(1.0 - q);
    }
    double loss = (lp.beta_reg * l_reg + lp.beta_cls * l_cls) / n;

    NodeId id = push(Tensor::scalar(loss),
                     needs_grad(obj_logits) || needs_grad(residuals));
    if (node(id).requires_grad) {
      bool ro = needs_grad(obj_logits), rr = needs_grad(residuals);
      DetectionTargets tt = t;
      double alpha = lp.alpha, gamma = lp.gamma;
      double breg = lp.beta_reg, bcls = lp.beta_cls;
      nodes_[id].backprop = [this, id, obj_logits, residuals, ro, rr, tt,
                             alpha, gamma, breg, bcls, n, cells]() {
        double g0 = node(id).grad[0];
        const Tensor& vo = value(obj_logits);
        const Tensor& vr = value(residuals);
        for (std::size_t i = 0; i < tt.pos_cells.size(); ++i) {
          int cell = tt.pos_cells[i];
          if (rr)
            for (int j = 0; j < 7; ++j)
              gref(residuals)[j * cells + cell] +=
                  g0 * breg / n *
                  smooth_l1_grad(vr[j * cells + cell] - tt.pos_residuals[i][j]);
          if (ro) {
            double q =
                std::clamp(stable_sigmoid(vo[cell]), kProbFloor, 1.0 - 1e-12);
            // d/dlogit of -alpha (1-q)^gamma log q, sigmoid folded in
            double d = alpha * gamma * q * std::pow(1.0 - q, gamma) *
                           std::log(q) -
                       alpha * std::pow(1.0 - q, gamma + 1.0);
            gref(obj_logits)[cell] += g0 * bcls / n * d;
          }
        }
        if (ro) {
          for (int cell : tt.neg_cells) {
            double q =
                std::clamp(stable_sigmoid(vo[cell]), kProbFloor, 1.0 - 1e-12);
            // d/dlogit of -(1-alpha) q^gamma log(1-q)
            double d = -(1.0 - alpha) * gamma * std::pow(q, gamma) *
                           (1.0 - q) * std::log(1.0 - q) +
                       (1.0 - alpha) * std::pow(q, gamma + 1.0);
            gref(obj_logits)[cell] += g0 * bcls / n * d;
          }
        }
      };
    }
    return id;
  }

  /// Value substitution with a pass-through gradient; carries channel
  /// distortion into a training graph (the equalized link is identity plus
  /// additive noise, so the pass-through is the analytic Jacobian up to the
  /// power-normalization terms).
  NodeId passthrough(NodeId x, Tensor distorted) {
    if (!distorted.same_shape(value(x)))
      throw std::invalid_argument("passthrough: shape mismatch");
    NodeId id = push(std::move(distorted), needs_grad(x));
    if (node(id).requires_grad) {
      nodes_[id].backprop = [this, id, x]() {
        const Tensor& g = node(id).grad;
        Tensor& gx = gref(x);
        for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      };
    }
    return id;
  }

  /// Reverse sweep from a scalar loss. Node gradients are reset first, so
  /// repeated calls accumulate only into bound ParamStore entries.
  void backward(NodeId loss) {
    if (nodes_.empty())
      throw std::logic_error("backward: no forward pass recorded");
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
      throw std::logic_error("backward: unknown loss node");
    if (node(loss).value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " +
                                  shape_str(node(loss).value.shape));
    for (auto& nd : nodes_) {
      nd.grad = Tensor(nd.value.shape);
    }
    nodes_[static_cast<std::size_t>(loss)].grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& nd = nodes_[i];
      if (nd.requires_grad && nd.backprop) nd.backprop();
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void()> backprop;
  };

  NodeId push(Tensor v, bool rg) {
    Node nd;
    nd.value = std::move(v);
    nd.requires_grad = rg;
    nodes_.push_back(std::move(nd));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  const Node& node(NodeId id) const {
    return nodes_.at(static_cast<std::size_t>(id));
  }
  Node& node(NodeId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  bool needs_grad(NodeId id) const { return node(id).requires_grad; }
  Tensor& gref(NodeId id) { return node(id).grad; }

  std::vector<Node> nodes_;
};

}  // namespace coopv2v
