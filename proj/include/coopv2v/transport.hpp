#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "coopv2v/channel.hpp"
#include "coopv2v/rng.hpp"
#include "coopv2v/tensor.hpp"

namespace coopv2v {

/// A feature map flattened into unit-power complex symbols. Consecutive
/// real values pair into (I, Q); an odd tail is zero-padded. The scale
/// restores the original amplitudes on the far side and, together with the
/// shape, rides an assumed error-free control side-channel.
struct FeaturePacket {
  int source_id = 0;
  std::vector<int> shape;
  double scale = 1.0;          // multiply recovered symbols by this
  std::vector<cplx> payload;   // average power 1 (all-zero input: zeros)
};

inline FeaturePacket pack(const Tensor& f, int source_id = 0) {
  if (!f.finite())
    throw std::invalid_argument("pack: feature map contains non-finite values");
  FeaturePacket pkt;
  pkt.source_id = source_id;
  pkt.shape = f.shape;
  std::int64_t n = f.size();
  std::int64_t len = (n + 1) / 2;
  pkt.payload.resize(static_cast<std::size_t>(len));
  double power = 0.0;
  for (std::int64_t i = 0; i < len; ++i) {
    double re = f[2 * i];
    double im = (2 * i + 1 < n) ? f[2 * i + 1] : 0.0;
    pkt.payload[static_cast<std::size_t>(i)] = cplx(re, im);
    power += re * re + im * im;
  }
  power /= static_cast<double>(len);
  pkt.scale = power > 0.0 ? std::sqrt(power) : 1.0;
  if (power > 0.0)
    for (cplx& s : pkt.payload) s /= pkt.scale;
  return pkt;
}

inline Tensor unpack(const FeaturePacket& pkt,
                     const std::vector<cplx>& recovered) {
  if (recovered.size() != pkt.payload.size())
    throw std::invalid_argument("unpack: symbol count does not match packet");
  Tensor f(pkt.shape);
  std::int64_t n = f.size();
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(recovered.size());
       ++i) {
    cplx s = recovered[static_cast<std::size_t>(i)] * pkt.scale;
    f[2 * i] = s.real();
    if (2 * i + 1 < n) f[2 * i + 1] = s.imag();
  }
  return f;
}

/// Full flat-Rician link: pack, fade, add noise, estimate CSI per the
/// config, zero-force, unpack. Returns the recovered feature map.
inline Tensor transmit(const Tensor& f, const FlatChannelConfig& cfg, Rng& rng,
                       ZfDiagnostics* diag = nullptr) {
  cfg.validate();
  FeaturePacket pkt = pack(f);
  FlatRealization r = draw_flat_channel(cfg, rng);
  std::vector<cplx> y = apply_flat(pkt.payload, r, cfg, rng);
  std::vector<cplx> truth{r.h()};
  CsiEstimate csi = cfg.csi_mode == CsiMode::kPerfect
                        ? perfect_csi(truth)
                        : perturb_csi(truth, cfg.csi_noise_var, rng);
  std::vector<cplx> xh = zf_detect(y, csi, r.gain, diag);
  return unpack(pkt, xh);
}

/// Full OFDM multipath link. The payload is zero-padded up to a whole
/// number of frames; the pad symbols are dropped again before unpacking.
inline Tensor transmit(const Tensor& f, const MultipathChannelConfig& cfg,
                       Rng& rng, ZfDiagnostics* diag = nullptr,
                       ChannelTrace* trace = nullptr) {
  cfg.validate();
  FeaturePacket pkt = pack(f);
  OfdmFrameLayout lay = make_frame_layout(cfg);
  std::vector<cplx> data = pkt.payload;
  std::size_t per_frame = static_cast<std::size_t>(lay.data_per_frame);
  if (data.size() % per_frame != 0)
    data.resize((data.size() / per_frame + 1) * per_frame, cplx(0.0, 0.0));
  MultipathRealization r = draw_multipath_channel(cfg, rng);
  OfdmReception rec = ofdm_transmit(data, r, cfg, rng);
  std::vector<cplx> xh = ofdm_recover_data(rec, r, cfg, diag, trace);
  xh.resize(pkt.payload.size());
  return unpack(pkt, xh);
}

}  // namespace coopv2v
