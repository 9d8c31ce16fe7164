#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "coopv2v/rng.hpp"

namespace coopv2v {

using cplx = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

// In-place iterative radix-2; sign = -1 forward, +1 inverse. Unnormalized.
inline void fft_radix2(std::vector<cplx>& a, int sign) {
  std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = sign * kTwoPi / static_cast<double>(len);
    cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline std::vector<cplx> dft_naive(const std::vector<cplx>& in, int sign) {
  std::size_t n = in.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      double ang = sign * kTwoPi * static_cast<double>(k) *
                   static_cast<double>(m) / static_cast<double>(n);
      acc += in[m] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<cplx> transform(const std::vector<cplx>& in, int sign) {
  if (is_pow2(in.size())) {
    std::vector<cplx> a = in;
    fft_radix2(a, sign);
    return a;
  }
  return dft_naive(in, sign);
}

}  // namespace detail

/// X[k] = sum_n x[n] e^{-j 2 pi k n / N}
inline std::vector<cplx> dft_forward(const std::vector<cplx>& x) {
  return detail::transform(x, -1);
}

/// x[n] = (1/N) sum_k X[k] e^{+j 2 pi k n / N}
inline std::vector<cplx> dft_inverse(const std::vector<cplx>& x) {
  std::vector<cplx> out = detail::transform(x, +1);
  double inv = 1.0 / static_cast<double>(out.size());
  for (cplx& v : out) v *= inv;
  return out;
}

// Unitary pair (1/sqrt(N) each way) used for OFDM symbol mapping so that
// time- and frequency-domain powers agree.
inline std::vector<cplx> dft_unitary_forward(const std::vector<cplx>& x) {
  std::vector<cplx> out = detail::transform(x, -1);
  double inv = 1.0 / std::sqrt(static_cast<double>(out.size()));
  for (cplx& v : out) v *= inv;
  return out;
}

inline std::vector<cplx> dft_unitary_inverse(const std::vector<cplx>& x) {
  std::vector<cplx> out = detail::transform(x, +1);
  double inv = 1.0 / std::sqrt(static_cast<double>(out.size()));
  for (cplx& v : out) v *= inv;
  return out;
}

}  // namespace coopv2v
