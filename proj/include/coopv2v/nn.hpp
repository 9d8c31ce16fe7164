#pragma once

#include <cmath>
#include <string>

#include "coopv2v/autodiff.hpp"
#include "coopv2v/param_store.hpp"
#include "coopv2v/rng.hpp"

namespace coopv2v {

inline void he_normal_init(Tensor& w, int fan_in, Rng& rng) {
  double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w.data) v = rng.normal(0.0, s);
}

/// 2D convolution layer bound to named ParamStore entries.
struct Conv2dLayer {
  std::string name;
  int in_ch, out_ch, ksize, stride, pad;

  void init(ParamStore& ps, Rng& rng) const {
    auto& w = ps.create(name + ".w", {out_ch, in_ch, ksize, ksize});
    he_normal_init(w.value, in_ch * ksize * ksize, rng);
    ps.create(name + ".b", {out_ch});
  }

  NodeId apply(Tape& t, ParamStore& ps, NodeId x) const {
    return t.conv2d(x, t.param(ps.get(name + ".w")),
                    t.param(ps.get(name + ".b")), stride, pad);
  }
};

struct BatchNorm2dLayer {
  std::string name;
  int channels;
  double momentum = 0.1;
  double eps = 1e-5;

  void init(ParamStore& ps) const {
    ps.create(name + ".gamma", {channels}).value.fill(1.0);
    ps.create(name + ".beta", {channels});
    ps.create(name + ".running_mean", {channels}, /*trainable=*/false);
    ps.create(name + ".running_var", {channels}, /*trainable=*/false)
        .value.fill(1.0);
  }

  NodeId apply(Tape& t, ParamStore& ps, NodeId x, bool train) const {
    return t.batchnorm2d(x, t.param(ps.get(name + ".gamma")),
                         t.param(ps.get(name + ".beta")),
                         ps.get(name + ".running_mean"),
                         ps.get(name + ".running_var"), momentum, eps, train);
  }
};

struct DenseLayer {
  std::string name;
  int in_dim, out_dim;

  void init(ParamStore& ps, Rng& rng) const {
    auto& w = ps.create(name + ".w", {out_dim, in_dim});
    he_normal_init(w.value, in_dim, rng);
    ps.create(name + ".b", {out_dim});
  }

  NodeId apply(Tape& t, ParamStore& ps, NodeId x) const {
    return t.dense(x, t.param(ps.get(name + ".w")),
                   t.param(ps.get(name + ".b")));
  }
};

/// conv 3x3 -> batchnorm -> relu, the building block used throughout.
struct ConvBnRelu {
  Conv2dLayer conv;
  BatchNorm2dLayer bn;

  ConvBnRelu(const std::string& prefix, int in_ch, int out_ch, int stride)
      : conv{prefix + ".conv", in_ch, out_ch, 3, stride, 1},
        bn{prefix + ".bn", out_ch} {}

  void init(ParamStore& ps, Rng& rng) const {
    conv.init(ps, rng);
    bn.init(ps);
  }

  NodeId apply(Tape& t, ParamStore& ps, NodeId x, bool train) const {
    return t.relu(bn.apply(t, ps, conv.apply(t, ps, x), train));
  }
};

}  // namespace coopv2v
