#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace coopv2v;
using testutil::fd_max_rel;
using testutil::nudge_away;
using testutil::random_tensor;

TEST_CASE("conv2d with a unit 1x1 kernel is the identity") {
  Rng rng(1);
  Tensor x = random_tensor({1, 5, 5}, rng);
  Tensor w({1, 1, 1, 1});
  w[0] = 1.0;
  Tape t;
  NodeId out = t.conv2d(t.constant(x), t.constant(w),
                        t.constant(Tensor({1})), 1, 0);
  for (std::int64_t i = 0; i < x.size(); ++i)
    REQUIRE(t.value(out)[i] == Catch::Approx(x[i]).margin(0.0));
}

TEST_CASE("conv2d of all-zero input yields the bias everywhere") {
  Tensor x({2, 4, 4});
  Rng rng(2);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b({3});
  b[0] = 0.5;
  b[1] = -1.25;
  b[2] = 2.0;
  Tape t;
  NodeId out = t.conv2d(t.constant(x), t.constant(w), t.constant(b), 1, 1);
  const Tensor& v = t.value(out);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx)
        REQUIRE(v.at(c, y, xx) == Catch::Approx(b[c]).margin(1e-15));
}

TEST_CASE("conv2d matches a direct nested-loop convolution") {
  Rng rng(3);
  Tensor x = random_tensor({1, 4, 4}, rng);
  Tensor w = random_tensor({2, 1, 3, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  Tape t;
  NodeId out = t.conv2d(t.constant(x), t.constant(w), t.constant(b), 1, 1);
  // independent brute-force loop
  for (int oc = 0; oc < 2; ++oc) {
    for (int oy = 0; oy < 4; ++oy) {
      for (int ox = 0; ox < 4; ++ox) {
        double acc = b[oc];
        for (int ky = 0; ky < 3; ++ky) {
          for (int kx = 0; kx < 3; ++kx) {
            int iy = oy - 1 + ky, ix = ox - 1 + kx;
            if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
            acc += w.at4(oc, 0, ky, kx) * x.at(0, iy, ix);
          }
        }
        REQUIRE(t.value(out).at(oc, oy, ox) == Catch::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv2d rejects mismatched shapes naming both") {
  Tape t;
  NodeId x = t.constant(Tensor({2, 4, 4}));
  NodeId w = t.constant(Tensor({3, 5, 3, 3}));
  NodeId b = t.constant(Tensor({3}));
  REQUIRE_THROWS_WITH(t.conv2d(x, w, b, 1, 1),
                      Catch::Matchers::ContainsSubstring("(2x4x4)") &&
                          Catch::Matchers::ContainsSubstring("(3x5x3x3)"));
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  Tape t;
  NodeId x = t.constant(Tensor({1, 2, 2}));
  NodeId w = t.constant(Tensor({1, 1, 5, 5}));
  NodeId b = t.constant(Tensor({1}));
  REQUIRE_THROWS_AS(t.conv2d(x, w, b, 1, 0), std::invalid_argument);
}

TEST_CASE("batchnorm maps constant input to zero in train mode") {
  ParamStore ps;
  BatchNorm2dLayer bn{"bn", 2};
  bn.init(ps);
  Tensor x({2, 4, 4}, 3.75);
  Tape t;
  NodeId out = bn.apply(t, ps, t.constant(x), true);
  for (double v : t.value(out).data) REQUIRE(v == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("batchnorm with zero scale emits the shift") {
  ParamStore ps;
  BatchNorm2dLayer bn{"bn", 1};
  bn.init(ps);
  ps.get("bn.gamma").value.fill(0.0);
  ps.get("bn.beta").value.fill(-2.5);
  Rng rng(5);
  Tensor x = random_tensor({1, 4, 4}, rng);
  Tape t;
  NodeId out = bn.apply(t, ps, t.constant(x), true);
  for (double v : t.value(out).data) REQUIRE(v == Catch::Approx(-2.5));
}

TEST_CASE("batchnorm normalizes per-channel statistics in train mode") {
  ParamStore ps;
  BatchNorm2dLayer bn{"bn", 3};
  bn.init(ps);
  Rng rng(6);
  Tensor x = random_tensor({3, 8, 8}, rng, -2.0, 2.0);
  Tape t;
  NodeId out = bn.apply(t, ps, t.constant(x), true);
  const Tensor& v = t.value(out);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx) mean += v.at(c, y, xx);
    mean /= 64.0;
    for (int y = 0; y < 8; ++y)
      for (int xx = 0; xx < 8; ++xx) {
        double d = v.at(c, y, xx) - mean;
        var += d * d;
      }
    var /= 64.0;
    REQUIRE(std::abs(mean) < 1e-4);
    REQUIRE(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("batchnorm rejects stats with the wrong channel count") {
  ParamStore ps;
  BatchNorm2dLayer bn{"bn", 4};
  bn.init(ps);
  Tape t;
  REQUIRE_THROWS_AS(bn.apply(t, ps, t.constant(Tensor({3, 4, 4})), true),
                    std::invalid_argument);
}

TEST_CASE("softmax of zeros is uniform") {
  Tape t;
  NodeId out = t.softmax(t.constant(Tensor({4})), 0);
  for (int i = 0; i < 4; ++i)
    REQUIRE(t.value(out)[i] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("softmax saturates without overflow") {
  Tensor x({2});
  x[0] = 1000.0;
  x[1] = 0.0;
  Tape t;
  NodeId out = t.softmax(t.constant(x), 0);
  REQUIRE(t.value(out)[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(t.value(out)[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("softmax matches hand evaluation") {
  Tensor x({3});
  x[0] = 1.0;
  x[1] = 2.0;
  x[2] = 3.0;
  Tape t;
  NodeId out = t.softmax(t.constant(x), 0);
  double z = std::exp(1.0 - 3.0) + std::exp(2.0 - 3.0) + std::exp(0.0);
  for (int i = 0; i < 3; ++i)
    REQUIRE(t.value(out)[i] ==
            Catch::Approx(std::exp(x[i] - 3.0) / z).epsilon(1e-12));
}

TEST_CASE("softmax sums to one along the axis for any finite input") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 5, 4}, rng, -50.0, 50.0);
    int axis = trial % 3;
    Tape t;
    NodeId out = t.softmax(t.constant(x), axis);
    const Tensor& p = t.value(out);
    // reduce along the axis and check each slice
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < 3; ++i) inner *= x.dim(i);
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t in = 0; in < inner; ++in) {
        double s = 0.0;
        for (int k = 0; k < x.dim(axis); ++k)
          s += p[o * x.dim(axis) * inner + k * inner + in];
        REQUIRE(std::abs(s - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("backward of a parameter sum is a gradient of ones") {
  ParamStore ps;
  ps.create("p", {3, 2});
  Rng rng(8);
  for (double& v : ps.get("p").value.data) v = rng.uniform(-1, 1);
  Tape t;
  NodeId loss = t.sum(t.param(ps.get("p")));
  t.backward(loss);
  for (double g : ps.get("p").grad.data) REQUIRE(g == 1.0);
}

TEST_CASE("consecutive backward calls double accumulated gradients") {
  ParamStore ps;
  ps.create("p", {4});
  Rng rng(9);
  for (double& v : ps.get("p").value.data) v = rng.uniform(-1, 1);
  Tape t;
  NodeId p = t.param(ps.get("p"));
  NodeId loss = t.weighted_sum(p, random_tensor({4}, rng));
  t.backward(loss);
  Tensor once = ps.get("p").grad;
  t.backward(loss);
  for (std::int64_t i = 0; i < once.size(); ++i)
    REQUIRE(ps.get("p").grad[i] == 2.0 * once[i]);
}

TEST_CASE("backward without a recorded forward pass is rejected") {
  Tape t;
  REQUIRE_THROWS_AS(t.backward(0), std::logic_error);
  NodeId v = t.constant(Tensor({2}));
  REQUIRE_THROWS_AS(t.backward(v + 5), std::logic_error);
  REQUIRE_THROWS_AS(t.backward(v), std::invalid_argument);  // non-scalar loss
}

// ---- gradient suite: central differences, eps 1e-3, 10 seeds ----

TEST_CASE("conv2d gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor b = random_tensor({3}, rng);
    Tensor coef = random_tensor({3, 3, 3}, rng);
    double err = fd_max_rel({x, w, b}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.weighted_sum(t.conv2d(v[0], v[1], v[2], 2, 1), coef);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("dense gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 200);
    Tensor x = random_tensor({6}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor coef = random_tensor({4}, rng);
    double err = fd_max_rel({x, w, b}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.weighted_sum(t.dense(v[0], v[1], v[2]), coef);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("relu gradients match finite differences away from the kink") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 300);
    Tensor x = random_tensor({3, 4, 4}, rng);
    nudge_away(x, 0.0, 5e-3);
    Tensor coef = random_tensor({3, 4, 4}, rng);
    double err = fd_max_rel({x}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.weighted_sum(t.relu(v[0]), coef);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("sigmoid gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 400);
    Tensor x = random_tensor({8}, rng, -3.0, 3.0);
    Tensor coef = random_tensor({8}, rng);
    double err = fd_max_rel({x}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.weighted_sum(t.sigmoid(v[0]), coef);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("batchnorm gradients match finite differences in both modes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 500);
    Tensor x = random_tensor({2, 4, 4}, rng);
    Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({2}, rng);
    Tensor coef = random_tensor({2, 4, 4}, rng);
    for (bool train : {true, false}) {
      ParamStore ps;
      ps.create("rm", {2}, false);
      ps.create("rv", {2}, false).value.fill(1.0);
      double err = fd_max_rel({x, gamma, beta},
                              [&](Tape& t, std::vector<NodeId>& v) {
        return t.weighted_sum(
            t.batchnorm2d(v[0], v[1], v[2], ps.get("rm"), ps.get("rv"), 0.1,
                          1e-5, train),
            coef);
      });
      REQUIRE(err < 1e-4);
    }
  }
}

TEST_CASE("softmax and KL divergence gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 600);
    Tensor logits_p = random_tensor({12}, rng, -2.0, 2.0);
    Tensor logits_q = random_tensor({12}, rng, -2.0, 2.0);
    double err = fd_max_rel({logits_p, logits_q},
                            [&](Tape& t, std::vector<NodeId>& v) {
      return t.kl_div(t.softmax(v[0], 0), t.softmax(v[1], 0));
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("smooth-L1 gradients match finite differences away from the kink") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 700);
    Tensor x = random_tensor({10}, rng, -2.5, 2.5);
    nudge_away(x, 1.0, 5e-3);
    nudge_away(x, -1.0, 5e-3);
    double err = fd_max_rel({x}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.smooth_l1_sum(v[0]);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("focal loss gradients match finite differences") {
  LossParams lp;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 800);
    Tensor q = random_tensor({9}, rng, 0.15, 0.9);
    double err = fd_max_rel({q}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.focal_sum(v[0], lp);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("structural op gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 900);
    Tensor a = random_tensor({2, 3, 3}, rng);
    Tensor b = random_tensor({3, 3, 3}, rng);
    Tensor s = random_tensor({1}, rng, 0.2, 2.0);
    Tensor coef = random_tensor({5, 3, 3}, rng);
    double err = fd_max_rel({a, b, s}, [&](Tape& t, std::vector<NodeId>& v) {
      NodeId cat = t.concat_channels(v[0], v[1]);
      NodeId scaled = t.scale_by(v[2], cat);
      NodeId picked = t.pick(t.flatten(scaled), 7);
      return t.add(t.weighted_sum(scaled, coef), picked);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("attentive fusion gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 1000);
    Tensor ego = random_tensor({4, 3, 3}, rng);
    Tensor c1 = random_tensor({4, 3, 3}, rng);
    Tensor c2 = random_tensor({4, 3, 3}, rng);
    Tensor coef = random_tensor({4, 3, 3}, rng);
    double err = fd_max_rel({ego, c1, c2}, [&](Tape& t, std::vector<NodeId>& v) {
      return t.weighted_sum(t.attentive_fuse({v[0], v[1], v[2]}), coef);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("detection loss gradients match finite differences") {
  LossParams lp;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 1100);
    Tensor logits = random_tensor({1, 4, 4}, rng, -2.0, 2.0);
    Tensor residuals = random_tensor({7, 4, 4}, rng, -0.8, 0.8);
    DetectionTargets targets;
    targets.pos_cells = {1, 6, 11};
    for (int i = 0; i < 3; ++i) {
      std::array<double, 7> r;
      for (double& v : r) v = rng.uniform(-0.1, 0.1);
      targets.pos_residuals.push_back(r);
    }
    targets.neg_cells = {0, 3, 5, 9, 14};
    double err = fd_max_rel({logits, residuals},
                            [&](Tape& t, std::vector<NodeId>& v) {
      return t.detection_loss(v[0], v[1], targets, lp);
    });
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("eval-mode forward passes are bit-identical") {
  PerceptionModel model;
  model.init(42);
  Rng rng(11);
  Tensor raster = random_tensor({1, 64, 64}, rng, 0.0, 1.0);
  Tensor a = model.encode_eval(raster);
  Tensor b = model.encode_eval(raster);
  REQUIRE(a.shape == b.shape);
  for (std::int64_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}
