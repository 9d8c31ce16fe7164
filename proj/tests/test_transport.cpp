#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace coopv2v;
using testutil::random_tensor;

TEST_CASE("packing four ones gives two normalized symbols and scale sqrt(2)") {
  Tensor f({4});
  f.fill(1.0);
  FeaturePacket pkt = pack(f);
  REQUIRE(pkt.payload.size() == 2);
  REQUIRE(pkt.scale == Catch::Approx(std::sqrt(2.0)));
  for (const cplx& s : pkt.payload) {
    REQUIRE(s.real() == Catch::Approx(1.0 / std::sqrt(2.0)));
    REQUIRE(s.imag() == Catch::Approx(1.0 / std::sqrt(2.0)));
  }
}

TEST_CASE("an all-zero feature packs to zeros with unit scale") {
  Tensor f({2, 3, 3});
  FeaturePacket pkt = pack(f);
  REQUIRE(pkt.scale == 1.0);
  for (const cplx& s : pkt.payload) REQUIRE(s == cplx(0.0, 0.0));
  Tensor back = unpack(pkt, pkt.payload);
  for (double v : back.data) REQUIRE(v == 0.0);
}

TEST_CASE("payload power is one for every nonzero feature map") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({3, 5, 7}, rng, -4.0, 4.0);
    FeaturePacket pkt = pack(f);
    double p = 0.0;
    for (const cplx& s : pkt.payload) p += std::norm(s);
    p /= static_cast<double>(pkt.payload.size());
    REQUIRE(p == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("pack then unpack is the identity, odd element counts included") {
  Rng rng(102);
  for (const std::vector<int>& shape :
       {std::vector<int>{5}, {2, 3}, {3, 3, 3}, {1, 4, 4}, {7}}) {
    Tensor f = random_tensor(shape, rng, -2.0, 2.0);
    FeaturePacket pkt = pack(f);
    Tensor back = unpack(pkt, pkt.payload);
    REQUIRE(back.shape == f.shape);
    for (std::int64_t i = 0; i < f.size(); ++i)
      REQUIRE(std::abs(back[i] - f[i]) < 1e-9);
  }
}

TEST_CASE("unpack rejects a symbol count mismatch") {
  Tensor f({4});
  f.fill(1.0);
  FeaturePacket pkt = pack(f);
  std::vector<cplx> wrong(pkt.payload.size() + 1);
  REQUIRE_THROWS_AS(unpack(pkt, wrong), std::invalid_argument);
}

TEST_CASE("pack rejects non-finite features") {
  Tensor f({2});
  f[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(pack(f), std::invalid_argument);
}

TEST_CASE("zero recovery unpacks to a zero map") {
  Rng rng(103);
  Tensor f = random_tensor({2, 4, 4}, rng);
  FeaturePacket pkt = pack(f);
  std::vector<cplx> silent(pkt.payload.size(), cplx(0.0, 0.0));
  Tensor back = unpack(pkt, silent);
  for (double v : back.data) REQUIRE(v == 0.0);
}

TEST_CASE("noiseless flat link with perfect CSI reproduces the feature") {
  FlatChannelConfig cfg;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.csi_mode = CsiMode::kPerfect;
  cfg.p0 = 2.5;
  cfg.distance = 7.0;
  cfg.path_loss_exp = 2.3;
  Rng rng(104);
  Tensor f = random_tensor({8, 16, 16}, rng, -3.0, 3.0);
  Tensor back = transmit(f, cfg, rng);
  for (std::int64_t i = 0; i < f.size(); ++i)
    REQUIRE(std::abs(back[i] - f[i]) < 1e-6);
}

TEST_CASE("noiseless OFDM with perfect CSI reproduces the feature") {
  MultipathChannelConfig cfg;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.csi_mode = MultipathCsiMode::kPerfect;
  Rng rng(105);
  Tensor f = random_tensor({8, 16, 16}, rng, -3.0, 3.0);
  Tensor back = transmit(f, cfg, rng);
  for (std::int64_t i = 0; i < f.size(); ++i)
    REQUIRE(std::abs(back[i] - f[i]) < 1e-6);
}

TEST_CASE("feature MSE equals rescaled symbol MSE for an even element count") {
  FlatChannelConfig cfg;
  cfg.snr_db = 5.0;
  Rng rng(106);
  Tensor f = random_tensor({4, 8, 8}, rng, -2.0, 2.0);
  FeaturePacket pkt = pack(f);
  FlatRealization r = draw_flat_channel(cfg, rng);
  std::vector<cplx> y = apply_flat(pkt.payload, r, cfg, rng);
  std::vector<cplx> xh = zf_detect(y, perfect_csi({r.h()}), r.gain);
  Tensor back = unpack(pkt, xh);

  double feat_sq = 0.0;
  for (std::int64_t i = 0; i < f.size(); ++i) {
    double d = back[i] - f[i];
    feat_sq += d * d;
  }
  double sym_sq = 0.0;
  for (std::size_t i = 0; i < xh.size(); ++i)
    sym_sq += std::norm(xh[i] - pkt.payload[i]);
  REQUIRE(feat_sq == Catch::Approx(pkt.scale * pkt.scale * sym_sq).margin(1e-9));
}

TEST_CASE("feature error grows as the SNR drops") {
  auto mse_at = [&](double snr_db) {
    FlatChannelConfig cfg;
    cfg.snr_db = snr_db;
    cfg.rician_k = 1.0;
    Rng rng(107);
    double total = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
      Tensor f = random_tensor({4, 8, 8}, rng, -2.0, 2.0);
      Tensor back = transmit(f, cfg, rng);
      for (std::int64_t i = 0; i < f.size(); ++i) {
        double d = back[i] - f[i];
        total += d * d;
      }
    }
    return total / trials;
  };
  REQUIRE(mse_at(0.0) > mse_at(20.0));
}

TEST_CASE("sixteen pilots distort features more than sixty-four at 30 dB") {
  auto mse_with_pilots = [&](int pilots) {
    MultipathChannelConfig cfg;
    cfg.pilot_count = pilots;
    cfg.snr_db = 30.0;
    cfg.csi_mode = MultipathCsiMode::kLsEstimate;
    Rng rng(108);
    double total = 0.0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
      Tensor f = random_tensor({4, 8, 8}, rng, -2.0, 2.0);
      Tensor back = transmit(f, cfg, rng);
      for (std::int64_t i = 0; i < f.size(); ++i) {
        double d = back[i] - f[i];
        total += d * d;
      }
    }
    return total / trials;
  };
  REQUIRE(mse_with_pilots(16) > mse_with_pilots(64));
}
