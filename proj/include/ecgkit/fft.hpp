#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "ecgkit/error.hpp"

namespace ecgkit {
namespace fft {

inline constexpr double kPi = 3.14159265358979323846;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform. sign = -1 forward, +1 inverse
// (inverse output is NOT divided by n).
inline void radix2(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw InvalidInputError("radix2 length must be a power of two");

  // Bit reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Bluestein chirp-z transform for arbitrary n, implemented as a circular
// convolution of length >= 2n-1 padded to a power of two. The chirp
// exponent is reduced mod 2n before the trig call to keep the argument
// small for large k.
inline void bluestein(std::vector<std::complex<double>>& a, int sign) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;

  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }

  std::vector<std::complex<double>> u(m, {0.0, 0.0});
  std::vector<std::complex<double>> v(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = std::conj(chirp[k]);
    if (k != 0) v[m - k] = std::conj(chirp[k]);
  }

  radix2(u, -1);
  radix2(v, -1);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  radix2(u, +1);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * inv_m * chirp[k];
}

// Forward DFT of arbitrary length: X_k = sum_t x_t e^{-2 pi i k t / n}.
inline std::vector<std::complex<double>> dft(const std::vector<std::complex<double>>& x) {
  std::vector<std::complex<double>> a = x;
  if (a.empty()) return a;
  if (is_power_of_two(a.size()))
    radix2(a, -1);
  else
    bluestein(a, -1);
  return a;
}

inline std::vector<std::complex<double>> dft_real(const std::vector<double>& x) {
  std::vector<std::complex<double>> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = std::complex<double>(x[i], 0.0);
  return dft(a);
}

}  // namespace fft
}  // namespace ecgkit
