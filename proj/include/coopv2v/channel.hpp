#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "coopv2v/dft.hpp"
#include "coopv2v/rng.hpp"

namespace coopv2v {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

enum class CsiMode { kPerfect, kPerturbed };
enum class MultipathCsiMode { kPerfect, kLsEstimate };

/// Flat Rician link: y = sqrt(p0/d^n) h x + w.
struct FlatChannelConfig {
  double p0 = 1.0;            // path-loss reference power
  double distance = 1.0;      // transmitter-receiver distance (m)
  double path_loss_exp = 2.0; // n
  double rician_k = 1.0;      // linear K-factor
  double snr_db = 30.0;       // may be +inf to disable noise
  CsiMode csi_mode = CsiMode::kPerfect;
  double csi_noise_var = 0.0;
  // When set, noise power is calibrated against the d = 1 received power,
  // so sweeping the path-loss exponent attenuates the signal instead of
  // being absorbed into the SNR definition.
  bool snr_at_unit_distance = false;

  void validate() const {
    if (!(distance > 0.0))
      throw std::invalid_argument("FlatChannelConfig: distance must be > 0");
    if (!(path_loss_exp >= 0.0))
      throw std::invalid_argument("FlatChannelConfig: path_loss_exp must be >= 0");
    if (!(rician_k >= 0.0))
      throw std::invalid_argument("FlatChannelConfig: rician_k must be >= 0");
    if (!(csi_noise_var >= 0.0))
      throw std::invalid_argument("FlatChannelConfig: csi_noise_var must be >= 0");
  }
};

/// Tap-delay-line multipath link carried over OFDM.
struct MultipathChannelConfig {
  int num_subcarriers = 64;
  int num_paths = 24;
  int max_delay = 16;      // samples
  int cyclic_prefix = 16;  // samples
  int pilot_count = 16;    // must divide num_subcarriers
  double snr_db = 30.0;
  MultipathCsiMode csi_mode = MultipathCsiMode::kLsEstimate;
  double carrier_frequency_hz = 2.6e9;  // recorded metadata, unused
  double pdp_decay = 4.0;               // exponential power-delay constant
  bool allow_short_cp = false;          // test override for the ISI study

  void validate() const {
    if (num_subcarriers < 2)
      throw std::invalid_argument("MultipathChannelConfig: need >= 2 subcarriers");
    if (num_paths < 1)
      throw std::invalid_argument("MultipathChannelConfig: need >= 1 path");
    if (max_delay < 0 || max_delay >= num_subcarriers)
      throw std::invalid_argument(
          "MultipathChannelConfig: max_delay must lie in [0, num_subcarriers)");
    if (cyclic_prefix < 0)
      throw std::invalid_argument("MultipathChannelConfig: negative cyclic prefix");
    if (cyclic_prefix < max_delay && !allow_short_cp)
      throw std::invalid_argument(
          "MultipathChannelConfig: cyclic_prefix must cover max_delay");
    if (pilot_count < 1 || num_subcarriers % pilot_count != 0)
      throw std::invalid_argument(
          "MultipathChannelConfig: pilot_count must divide num_subcarriers");
    if (!(pdp_decay > 0.0))
      throw std::invalid_argument("MultipathChannelConfig: pdp_decay must be > 0");
  }
};

/// One draw of the flat channel. The LOS and diffuse parts are kept
/// separate so their power ratio (the K factor) stays observable.
struct FlatRealization {
  cplx los;
  cplx diffuse;
  double gain = 1.0;  // sqrt(p0 / d^n)

  cplx h() const { return los + diffuse; }
};

/// One draw of the multipath channel: impulse response plus its
/// frequency response (the DFT of the zero-padded taps).
struct MultipathRealization {
  std::vector<cplx> taps;           // length max_delay + 1
  std::vector<cplx> freq_response;  // length num_subcarriers

  double tap_power() const {
    double p = 0.0;
    for (const cplx& t : taps) p += std::norm(t);
    return p;
  }
};

struct CsiEstimate {
  enum class Provenance { kPerfect, kPerturbed, kLsEstimated };
  Provenance provenance = Provenance::kPerfect;
  int pilot_count = 0;   // set for LS estimates
  std::vector<cplx> h;   // one entry (flat) or one per subcarrier
};

struct ZfDiagnostics {
  std::int64_t floored = 0;  // CSI entries pushed up to the magnitude floor
};

inline constexpr double kZfFloor = 1e-6;

inline FlatRealization draw_flat_channel(const FlatChannelConfig& cfg,
                                         Rng& rng) {
  cfg.validate();
  FlatRealization r;
  double k = cfg.rician_k;
  double phi = rng.uniform(0.0, kTwoPi);
  r.los = std::sqrt(k / (k + 1.0)) * cplx(std::cos(phi), std::sin(phi));
  r.diffuse = std::sqrt(1.0 / (k + 1.0)) * rng.complex_normal(1.0);
  r.gain = std::sqrt(cfg.p0 / std::pow(cfg.distance, cfg.path_loss_exp));
  return r;
}

/// y = gain h x + w, with the noise variance set so the realized
/// signal-to-noise power ratio equals the configured SNR. x is assumed
/// unit average power (the transport layer normalizes).
inline std::vector<cplx> apply_flat(const std::vector<cplx>& x,
                                    const FlatRealization& r,
                                    const FlatChannelConfig& cfg, Rng& rng) {
  if (x.empty()) throw std::invalid_argument("apply_flat: empty frame");
  cplx h = r.h();
  double ref_gain = cfg.snr_at_unit_distance ? std::sqrt(cfg.p0) : r.gain;
  double signal_power = ref_gain * ref_gain * std::norm(h);
  double snr = db_to_linear(cfg.snr_db);
  bool noiseless = std::isinf(cfg.snr_db) && cfg.snr_db > 0.0;
  double noise_var = noiseless ? 0.0 : signal_power / snr;
  std::vector<cplx> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = r.gain * h * x[i];
    if (!noiseless) y[i] += rng.complex_normal(noise_var);
  }
  return y;
}

/// estimate = truth + e, e ~ CN(0, variance) per entry.
inline CsiEstimate perturb_csi(const std::vector<cplx>& truth, double variance,
                               Rng& rng) {
  if (variance < 0.0)
    throw std::invalid_argument("perturb_csi: negative variance");
  CsiEstimate est;
  est.provenance = CsiEstimate::Provenance::kPerturbed;
  est.h.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    est.h[i] = truth[i] + (variance > 0.0 ? rng.complex_normal(variance)
                                          : cplx(0.0, 0.0));
  return est;
}

inline CsiEstimate perfect_csi(const std::vector<cplx>& truth) {
  CsiEstimate est;
  est.provenance = CsiEstimate::Provenance::kPerfect;
  est.h = truth;
  return est;
}

namespace detail {
inline cplx floor_csi(cplx h, ZfDiagnostics* diag) {
  double mag = std::abs(h);
  if (mag >= kZfFloor) return h;
  if (diag) ++diag->floored;
  if (mag == 0.0) return cplx(kZfFloor, 0.0);
  return h * (kZfFloor / mag);
}
}  // namespace detail

/// Zero-forcing detection: x_hat = y / (gain * h_hat), elementwise. The
/// estimate is broadcast when it carries a single coefficient; entries with
/// magnitude under 1e-6 are floored and counted.
inline std::vector<cplx> zf_detect(const std::vector<cplx>& y,
                                   const CsiEstimate& csi, double gain,
                                   ZfDiagnostics* diag = nullptr) {
  if (csi.h.empty()) throw std::invalid_argument("zf_detect: empty CSI");
  if (csi.h.size() != 1 && csi.h.size() != y.size())
    throw std::invalid_argument("zf_detect: CSI arity does not match frame");
  std::vector<cplx> x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    cplx h = detail::floor_csi(csi.h.size() == 1 ? csi.h[0] : csi.h[i], diag);
    x[i] = y[i] / (gain * h);
  }
  return x;
}

/// Draws num_paths complex Gaussian taps at integer delays uniform in
/// [0, max_delay] with an exponential power-delay profile normalized to
/// unit expected total power, then takes the length-N DFT.
inline MultipathRealization draw_multipath_channel(
    const MultipathChannelConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<int> delays(static_cast<std::size_t>(cfg.num_paths));
  std::vector<double> weights(static_cast<std::size_t>(cfg.num_paths));
  double wsum = 0.0;
  for (int p = 0; p < cfg.num_paths; ++p) {
    delays[p] = cfg.max_delay > 0 ? rng.uniform_int(0, cfg.max_delay) : 0;
    weights[p] = std::exp(-static_cast<double>(delays[p]) / cfg.pdp_decay);
    wsum += weights[p];
  }
  MultipathRealization r;
  r.taps.assign(static_cast<std::size_t>(cfg.max_delay) + 1, cplx(0.0, 0.0));
  for (int p = 0; p < cfg.num_paths; ++p) {
    cplx a = std::sqrt(weights[p] / wsum) * rng.complex_normal(1.0);
    r.taps[static_cast<std::size_t>(delays[p])] += a;
  }
  std::vector<cplx> padded(static_cast<std::size_t>(cfg.num_subcarriers),
                           cplx(0.0, 0.0));
  for (std::size_t i = 0; i < r.taps.size(); ++i) padded[i] = r.taps[i];
  r.freq_response = dft_forward(padded);
  return r;
}

/// Comb pilots when pilot_count < N; a dedicated all-pilot symbol per frame
/// when pilot_count == N (there is no room left for data in a comb).
struct OfdmFrameLayout {
  bool block_pilot = false;
  int num_subcarriers = 0;
  int data_per_frame = 0;
  int symbols_per_frame = 1;  // OFDM symbols making up one frame
  std::vector<int> pilot_positions;
  std::vector<int> data_positions;
};

inline OfdmFrameLayout make_frame_layout(const MultipathChannelConfig& cfg) {
  cfg.validate();
  OfdmFrameLayout lay;
  lay.num_subcarriers = cfg.num_subcarriers;
  if (cfg.pilot_count == cfg.num_subcarriers) {
    lay.block_pilot = true;
    lay.symbols_per_frame = 2;
    lay.data_per_frame = cfg.num_subcarriers;
    for (int i = 0; i < cfg.num_subcarriers; ++i) {
      lay.pilot_positions.push_back(i);
      lay.data_positions.push_back(i);
    }
  } else {
    int spacing = cfg.num_subcarriers / cfg.pilot_count;
    for (int i = 0; i < cfg.num_subcarriers; ++i) {
      if (i % spacing == 0 && i / spacing < cfg.pilot_count)
        lay.pilot_positions.push_back(i);
      else
        lay.data_positions.push_back(i);
    }
    lay.data_per_frame = static_cast<int>(lay.data_positions.size());
  }
  return lay;
}

/// Deterministic unit-magnitude QPSK pilot values.
inline std::vector<cplx> pilot_sequence(int count) {
  std::vector<cplx> seq(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    double phase = 0.125 * kTwoPi + (k % 4) * 0.25 * kTwoPi;
    seq[k] = cplx(std::cos(phase), std::sin(phase));
  }
  return seq;
}

/// Frequency-domain grid, one OFDM symbol (N entries) after another.
struct OfdmGrid {
  int num_frames = 0;
  std::vector<cplx> symbols;  // num_frames * symbols_per_frame * N
};

inline OfdmGrid ofdm_build_tx_grid(const std::vector<cplx>& data,
                                   const OfdmFrameLayout& lay) {
  if (lay.data_per_frame == 0 ||
      data.size() % static_cast<std::size_t>(lay.data_per_frame) != 0)
    throw std::invalid_argument(
        "ofdm: payload length must be a multiple of the per-frame data count");
  int n = lay.num_subcarriers;
  int frames = static_cast<int>(data.size()) / lay.data_per_frame;
  std::vector<cplx> pilots = pilot_sequence(
      static_cast<int>(lay.pilot_positions.size()));
  OfdmGrid grid;
  grid.num_frames = frames;
  grid.symbols.assign(static_cast<std::size_t>(frames) *
                          lay.symbols_per_frame * n,
                      cplx(0.0, 0.0));
  for (int f = 0; f < frames; ++f) {
    std::size_t frame_base =
        static_cast<std::size_t>(f) * lay.symbols_per_frame * n;
    const cplx* d = data.data() + static_cast<std::size_t>(f) * lay.data_per_frame;
    if (lay.block_pilot) {
      for (int i = 0; i < n; ++i) grid.symbols[frame_base + i] = pilots[i];
      for (int i = 0; i < n; ++i) grid.symbols[frame_base + n + i] = d[i];
    } else {
      for (std::size_t k = 0; k < lay.pilot_positions.size(); ++k)
        grid.symbols[frame_base + lay.pilot_positions[k]] = pilots[k];
      for (std::size_t k = 0; k < lay.data_positions.size(); ++k)
        grid.symbols[frame_base + lay.data_positions[k]] = d[k];
    }
  }
  return grid;
}

/// Runs a tx grid through the tap-delay channel: per OFDM symbol IFFT,
/// cyclic prefix, one continuous linear convolution with the impulse
/// response, AWGN, then prefix removal and FFT. With CP >= max delay the
/// per-subcarrier model Y = H X + W holds exactly.
inline OfdmGrid ofdm_channel_pass(const OfdmGrid& tx,
                                  const MultipathRealization& r,
                                  const MultipathChannelConfig& cfg,
                                  Rng& rng) {
  int n = cfg.num_subcarriers;
  int g = cfg.cyclic_prefix;
  int nsym = static_cast<int>(tx.symbols.size()) / n;
  std::vector<cplx> stream;
  stream.reserve(static_cast<std::size_t>(nsym) * (n + g));
  for (int s = 0; s < nsym; ++s) {
    std::vector<cplx> freq(tx.symbols.begin() + static_cast<std::ptrdiff_t>(s) * n,
                           tx.symbols.begin() + static_cast<std::ptrdiff_t>(s + 1) * n);
    std::vector<cplx> time = dft_unitary_inverse(freq);
    for (int i = n - g; i < n; ++i) stream.push_back(time[static_cast<std::size_t>(i)]);
    for (int i = 0; i < n; ++i) stream.push_back(time[static_cast<std::size_t>(i)]);
  }

  // realized per-subcarrier signal power sets the noise floor
  double sig = 0.0;
  for (const cplx& hf : r.freq_response) sig += std::norm(hf);
  sig /= static_cast<double>(r.freq_response.size());
  bool noiseless = std::isinf(cfg.snr_db) && cfg.snr_db > 0.0;
  double noise_var = noiseless ? 0.0 : sig / db_to_linear(cfg.snr_db);

  std::vector<cplx> rx_stream(stream.size(), cplx(0.0, 0.0));
  for (std::size_t i = 0; i < stream.size(); ++i) {
    cplx acc(0.0, 0.0);
    for (std::size_t d = 0; d < r.taps.size(); ++d) {
      if (i < d) break;
      acc += r.taps[d] * stream[i - d];
    }
    rx_stream[i] = acc;
    if (!noiseless) rx_stream[i] += rng.complex_normal(noise_var);
  }

  OfdmGrid rx;
  rx.num_frames = tx.num_frames;
  rx.symbols.resize(tx.symbols.size());
  for (int s = 0; s < nsym; ++s) {
    std::size_t base = static_cast<std::size_t>(s) * (n + g) + g;
    std::vector<cplx> time(rx_stream.begin() + static_cast<std::ptrdiff_t>(base),
                           rx_stream.begin() + static_cast<std::ptrdiff_t>(base + n));
    std::vector<cplx> freq = dft_unitary_forward(time);
    std::copy(freq.begin(), freq.end(),
              rx.symbols.begin() + static_cast<std::ptrdiff_t>(s) * n);
  }
  return rx;
}

struct OfdmReception {
  OfdmFrameLayout layout;
  OfdmGrid tx;  // transmitted grid (known pilots; data kept for diagnostics)
  OfdmGrid rx;  // received frequency-domain grid
};

inline OfdmReception ofdm_transmit(const std::vector<cplx>& data,
                                   const MultipathRealization& r,
                                   const MultipathChannelConfig& cfg,
                                   Rng& rng) {
  OfdmReception rec;
  rec.layout = make_frame_layout(cfg);
  rec.tx = ofdm_build_tx_grid(data, rec.layout);
  rec.rx = ofdm_channel_pass(rec.tx, r, cfg, rng);
  return rec;
}

/// Least-squares channel estimation: H_hat = Y/X at pilot subcarriers,
/// linear interpolation (real and imaginary parts independently) in
/// between, nearest-pilot extension at the band edges.
inline CsiEstimate ls_estimate(const std::vector<cplx>& rx_pilots,
                               const std::vector<cplx>& tx_pilots,
                               const std::vector<int>& positions,
                               int num_subcarriers) {
  if (rx_pilots.size() != tx_pilots.size() ||
      rx_pilots.size() != positions.size() || positions.empty())
    throw std::invalid_argument("ls_estimate: pilot arrays must align");
  for (const cplx& p : tx_pilots)
    if (std::abs(p) < 1e-12)
      throw std::invalid_argument("ls_estimate: zero pilot symbol");

  std::vector<cplx> at_pilots(positions.size());
  for (std::size_t k = 0; k < positions.size(); ++k)
    at_pilots[k] = rx_pilots[k] / tx_pilots[k];

  CsiEstimate est;
  est.provenance = CsiEstimate::Provenance::kLsEstimated;
  est.pilot_count = static_cast<int>(positions.size());
  est.h.resize(static_cast<std::size_t>(num_subcarriers));
  std::size_t seg = 0;
  for (int i = 0; i < num_subcarriers; ++i) {
    if (i <= positions.front()) {
      est.h[static_cast<std::size_t>(i)] = at_pilots.front();
      continue;
    }
    if (i >= positions.back()) {
      est.h[static_cast<std::size_t>(i)] = at_pilots.back();
      continue;
    }
    while (positions[seg + 1] < i) ++seg;
    double t = static_cast<double>(i - positions[seg]) /
               static_cast<double>(positions[seg + 1] - positions[seg]);
    est.h[static_cast<std::size_t>(i)] =
        (1.0 - t) * at_pilots[seg] + t * at_pilots[seg + 1];
  }
  return est;
}

/// Debug dump of true vs estimated frequency response, one row per
/// (frame, subcarrier).
struct ChannelTrace {
  struct Row {
    int frame;
    int subcarrier;
    cplx h;
    cplx h_hat;
  };
  std::vector<Row> rows;

  void write_csv(std::ostream& os) const {
    os << "frame,subcarrier,H_real,H_imag,Hhat_real,Hhat_imag\n";
    for (const Row& r : rows)
      os << r.frame << ',' << r.subcarrier << ',' << r.h.real() << ','
         << r.h.imag() << ',' << r.h_hat.real() << ',' << r.h_hat.imag()
         << '\n';
  }
};

/// Per-frame channel estimation (perfect or LS from that frame's pilots)
/// followed by zero-forcing on the data subcarriers. Returns the
/// concatenated equalized data symbols.
inline std::vector<cplx> ofdm_recover_data(const OfdmReception& rec,
                                           const MultipathRealization& r,
                                           const MultipathChannelConfig& cfg,
                                           ZfDiagnostics* diag = nullptr,
                                           ChannelTrace* trace = nullptr) {
  const OfdmFrameLayout& lay = rec.layout;
  int n = lay.num_subcarriers;
  std::vector<cplx> pilots =
      pilot_sequence(static_cast<int>(lay.pilot_positions.size()));
  std::vector<cplx> out;
  out.reserve(static_cast<std::size_t>(rec.rx.num_frames) * lay.data_per_frame);
  for (int f = 0; f < rec.rx.num_frames; ++f) {
    std::size_t frame_base = static_cast<std::size_t>(f) * lay.symbols_per_frame * n;
    // pilot symbols live in the first OFDM symbol of the frame either way
    CsiEstimate csi;
    if (cfg.csi_mode == MultipathCsiMode::kPerfect) {
      csi = perfect_csi(r.freq_response);
    } else {
      std::vector<cplx> rx_p(lay.pilot_positions.size());
      for (std::size_t k = 0; k < lay.pilot_positions.size(); ++k)
        rx_p[k] = rec.rx.symbols[frame_base + lay.pilot_positions[k]];
      csi = ls_estimate(rx_p, pilots, lay.pilot_positions, n);
    }
    if (trace) {
      for (int i = 0; i < n; ++i)
        trace->rows.push_back({f, i, r.freq_response[static_cast<std::size_t>(i)],
                               csi.h[static_cast<std::size_t>(i)]});
    }
    std::size_t data_base =
        lay.block_pilot ? frame_base + static_cast<std::size_t>(n) : frame_base;
    std::vector<cplx> y(lay.data_positions.size());
    CsiEstimate csi_data;
    csi_data.provenance = csi.provenance;
    csi_data.pilot_count = csi.pilot_count;
    csi_data.h.resize(lay.data_positions.size());
    for (std::size_t k = 0; k < lay.data_positions.size(); ++k) {
      y[k] = rec.rx.symbols[data_base + lay.data_positions[k]];
      csi_data.h[k] = csi.h[static_cast<std::size_t>(lay.data_positions[k])];
    }
    std::vector<cplx> xh = zf_detect(y, csi_data, 1.0, diag);
    out.insert(out.end(), xh.begin(), xh.end());
  }
  return out;
}

}  // namespace coopv2v
