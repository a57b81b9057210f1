#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/image.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/signal.hpp"

namespace ecgkit {

struct DetrendConfig {
  int order = 121;  // window length in samples, odd

  void validate() const {
    if (order < 3 || order % 2 == 0)
      throw InvalidConfigError("detrend order must be odd and >= 3");
  }
};

struct SmoothConfig {
  int window = 21;
  int degree = 3;

  void validate() const {
    if (window < 3 || window % 2 == 0)
      throw InvalidConfigError("smoothing window must be odd and >= 3");
    if (degree < 0 || degree >= window)
      throw InvalidConfigError("polynomial degree must be < window");
  }
};

// One heartbeat slice. r_index is the R-peak position within the slice.
struct Beat {
  Signal samples;
  std::size_t r_index = 0;
};

// Fixed-size single-channel raster of one heartbeat.
inline constexpr int kBeatImageSize = 138;
inline constexpr double kBeatVoltageSpanMv = 2.0;  // rows cover [-2, +2] mV

struct BeatImage {
  std::vector<double> pixels;  // row-major, kBeatImageSize^2, values in [0,1]

  BeatImage() : pixels(static_cast<std::size_t>(kBeatImageSize) * kBeatImageSize, 1.0) {}

  double& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * kBeatImageSize + c];
  }
  double at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * kBeatImageSize + c];
  }
};

namespace detail {

// Mirror reflection about the endpoints without repeating the edge sample:
// index -1 maps to 1, index n maps to n-2.
inline std::size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<std::size_t>(m);
}

}  // namespace detail

// Baseline-wander removal: subtract the running median over a centered
// window of cfg.order samples, with mirror reflection at the edges.
inline Signal detrend_median(const Signal& sig, const DetrendConfig& cfg = {}) {
  sig.validate();
  cfg.validate();
  const long long n = static_cast<long long>(sig.samples.size());
  const long long half = cfg.order / 2;

  Signal out = sig;
  std::vector<double> window(static_cast<std::size_t>(cfg.order));
  for (long long t = 0; t < n; ++t) {
    for (long long j = -half; j <= half; ++j)
      window[static_cast<std::size_t>(j + half)] =
          sig.samples[detail::reflect_index(t + j, n)];
    auto mid = window.begin() + cfg.order / 2;
    std::nth_element(window.begin(), mid, window.end());
    out.samples[static_cast<std::size_t>(t)] =
        sig.samples[static_cast<std::size_t>(t)] - *mid;
  }
  return out;
}

namespace detail {

// Convolution weights of the Savitzky-Golay center estimate: row 0 of
// (A^T A)^-1 A^T where A_{j,q} = j^q over the centered window. Solved by
// Gaussian elimination on the small normal-equation system.
inline std::vector<double> savgol_coeffs(int window, int degree) {
  const int half = window / 2;
  const int m = degree + 1;

  // Normal matrix S_{p,q} = sum_j j^{p+q}, right-hand side e_0.
  std::vector<double> powersum(static_cast<std::size_t>(2 * degree + 1), 0.0);
  for (int j = -half; j <= half; ++j) {
    double pw = 1.0;
    for (int p = 0; p <= 2 * degree; ++p) {
      powersum[static_cast<std::size_t>(p)] += pw;
      pw *= j;
    }
  }
  std::vector<std::vector<double>> a(static_cast<std::size_t>(m),
                                     std::vector<double>(static_cast<std::size_t>(m + 1), 0.0));
  for (int p = 0; p < m; ++p) {
    for (int q = 0; q < m; ++q)
      a[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] =
          powersum[static_cast<std::size_t>(p + q)];
    a[static_cast<std::size_t>(p)][static_cast<std::size_t>(m)] = (p == 0) ? 1.0 : 0.0;
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < m; ++col) {
    int pivot = col;
    for (int r = col + 1; r < m; ++r)
      if (std::abs(a[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::abs(a[static_cast<std::size_t>(pivot)][static_cast<std::size_t>(col)]))
        pivot = r;
    std::swap(a[static_cast<std::size_t>(col)], a[static_cast<std::size_t>(pivot)]);
    const double d = a[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    for (int q = col; q <= m; ++q) a[static_cast<std::size_t>(col)][static_cast<std::size_t>(q)] /= d;
    for (int r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)];
      if (f == 0.0) continue;
      for (int q = col; q <= m; ++q)
        a[static_cast<std::size_t>(r)][static_cast<std::size_t>(q)] -=
            f * a[static_cast<std::size_t>(col)][static_cast<std::size_t>(q)];
    }
  }
  // beta = (A^T A)^{-1} e_0; the weight of window offset j is
  // w_j = sum_q beta_q j^q, the j-th entry of A beta.
  std::vector<double> beta(static_cast<std::size_t>(m));
  for (int p = 0; p < m; ++p)
    beta[static_cast<std::size_t>(p)] = a[static_cast<std::size_t>(p)][static_cast<std::size_t>(m)];
  std::vector<double> w(static_cast<std::size_t>(window), 0.0);
  for (int j = -half; j <= half; ++j) {
    double pw = 1.0;
    double sum = 0.0;
    for (int q = 0; q < m; ++q) {
      sum += beta[static_cast<std::size_t>(q)] * pw;
      pw *= j;
    }
    w[static_cast<std::size_t>(j + half)] = sum;
  }
  return w;
}

}  // namespace detail

// Savitzky-Golay smoothing: each output sample is the center value of the
// least-squares polynomial fit over the centered window. Edges use mirror
// reflection, so the filter is exact on polynomials of degree <= cfg.degree
// away from the first and last window/2 samples.
inline Signal savgol_smooth(const Signal& sig, const SmoothConfig& cfg = {}) {
  sig.validate();
  cfg.validate();
  const long long n = static_cast<long long>(sig.samples.size());
  if (n < cfg.window)
    throw InvalidConfigError("smoothing window exceeds signal length");

  const std::vector<double> w = detail::savgol_coeffs(cfg.window, cfg.degree);
  const long long half = cfg.window / 2;
  Signal out = sig;
  for (long long t = 0; t < n; ++t) {
    double acc = 0.0;
    for (long long j = -half; j <= half; ++j)
      acc += w[static_cast<std::size_t>(j + half)] *
             sig.samples[detail::reflect_index(t + j, n)];
    out.samples[static_cast<std::size_t>(t)] = acc;
  }
  return out;
}

// R-peak detection on a detrended signal: local maxima of |x| above
// 0.6 times the 98th percentile of |x|, thinned so that kept peaks are at
// least 200 ms apart (larger amplitudes win).
inline std::vector<std::size_t> detect_r_peaks(const Signal& sig) {
  sig.validate();
  constexpr double kRefractoryMs = 200.0;
  constexpr double kThresholdFraction = 0.6;
  constexpr double kPercentile = 0.98;

  const std::size_t n = sig.samples.size();
  if (sig.duration_ms() < kRefractoryMs) return {};

  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(sig.samples[i]);

  std::vector<double> sorted = mag;
  std::size_t idx = static_cast<std::size_t>(
      std::max(0.0, std::ceil(kPercentile * static_cast<double>(n)) - 1.0));
  if (idx >= n) idx = n - 1;
  std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
  const double threshold = kThresholdFraction * sorted[idx];

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (mag[i] > threshold && mag[i] >= mag[i - 1] && mag[i] >= mag[i + 1])
      candidates.push_back(i);

  // Greedy selection by descending amplitude, index ascending on ties.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return mag[a] > mag[b]; });
  const double refractory_samples = kRefractoryMs / sig.sample_period_ms;
  std::vector<std::size_t> kept;
  for (std::size_t cand : candidates) {
    bool ok = true;
    for (std::size_t k : kept) {
      const double gap = std::abs(static_cast<double>(cand) - static_cast<double>(k));
      if (gap < refractory_samples) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(cand);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

// Slice the signal into fixed-width windows centered on each peak. Peaks
// whose window would cross either end of the signal are dropped. No
// amplitude normalization is applied.
inline std::vector<Beat> segment_beats(const Signal& sig,
                                       const std::vector<std::size_t>& peaks,
                                       double window_ms = 700.0) {
  sig.validate();
  const std::size_t n = sig.samples.size();
  const std::size_t width = static_cast<std::size_t>(
      std::lround(window_ms / sig.sample_period_ms));
  if (width == 0 || width > n) return {};

  std::vector<Beat> beats;
  for (std::size_t peak : peaks) {
    const long long start = static_cast<long long>(peak) -
                            static_cast<long long>(width / 2);
    if (start < 0) continue;
    if (static_cast<std::size_t>(start) + width > n) continue;
    Beat b;
    b.samples.sample_period_ms = sig.sample_period_ms;
    b.samples.t0_ms = sig.time_at(static_cast<std::size_t>(start));
    b.samples.samples.assign(sig.samples.begin() + start,
                             sig.samples.begin() + start + static_cast<long long>(width));
    b.r_index = peak - static_cast<std::size_t>(start);
    beats.push_back(std::move(b));
  }
  return beats;
}

namespace detail {

inline int beat_row_for_voltage(double mv) {
  const double span = 2.0 * kBeatVoltageSpanMv;
  double r = (kBeatVoltageSpanMv - mv) / span * (kBeatImageSize - 1);
  long long row = std::llround(r);
  if (row < 0) row = 0;
  if (row >= kBeatImageSize) row = kBeatImageSize - 1;
  return static_cast<int>(row);
}

}  // namespace detail

// Rasterize one beat: black 1-px polyline on a white canvas. Time spans
// all columns, voltage maps [-2,+2] mV onto the rows (clipped). Adjacent
// columns are joined by vertical runs split at the midpoints, so the trace
// stays connected through steep deflections.
inline BeatImage render_beat_image(const Beat& beat) {
  beat.samples.validate();
  const std::size_t n = beat.samples.samples.size();
  BeatImage img;

  std::vector<int> row(static_cast<std::size_t>(kBeatImageSize));
  for (int c = 0; c < kBeatImageSize; ++c) {
    double v;
    if (n == 1) {
      v = beat.samples.samples[0];
    } else {
      const double pos = static_cast<double>(c) * static_cast<double>(n - 1) /
                         static_cast<double>(kBeatImageSize - 1);
      const std::size_t i0 = static_cast<std::size_t>(pos);
      const std::size_t i1 = std::min(i0 + 1, n - 1);
      const double frac = pos - static_cast<double>(i0);
      v = (1.0 - frac) * beat.samples.samples[i0] + frac * beat.samples.samples[i1];
    }
    row[static_cast<std::size_t>(c)] = detail::beat_row_for_voltage(v);
  }

  for (int c = 0; c < kBeatImageSize; ++c) {
    int lo = row[static_cast<std::size_t>(c)];
    int hi = lo;
    if (c > 0) {
      const int mid = static_cast<int>(std::llround(
          (row[static_cast<std::size_t>(c - 1)] + row[static_cast<std::size_t>(c)]) / 2.0));
      lo = std::min(lo, mid);
      hi = std::max(hi, mid);
    }
    if (c + 1 < kBeatImageSize) {
      const int mid = static_cast<int>(std::llround(
          (row[static_cast<std::size_t>(c)] + row[static_cast<std::size_t>(c + 1)]) / 2.0));
      lo = std::min(lo, mid);
      hi = std::max(hi, mid);
    }
    for (int r = lo; r <= hi; ++r) img.at(r, c) = 0.0;
  }
  return img;
}

// Produce n slightly distorted variants of a beat image: vertical
// amplitude rescale about the 0 mV row, integer shifts up to +-4 px, and
// additive uniform pixel noise. Deterministic for a given seed.
inline std::vector<BeatImage> augment(const BeatImage& img, std::uint64_t seed,
                                      std::size_t n) {
  if (n < 1) throw InvalidInputError("augment count must be >= 1");
  Rng rng(seed);
  constexpr double kCenterRow = (kBeatImageSize - 1) / 2.0;  // 0 mV

  std::vector<BeatImage> out;
  out.reserve(n);
  for (std::size_t v = 0; v < n; ++v) {
    const double scale = rng.uniform(0.95, 1.05);
    const int dc = static_cast<int>(rng.uniform_int(-4, 4));
    const int dr = static_cast<int>(rng.uniform_int(-4, 4));

    BeatImage variant;
    for (int r = 0; r < kBeatImageSize; ++r) {
      for (int c = 0; c < kBeatImageSize; ++c) {
        // Invert the shift, then the amplitude scale.
        const int src_c = c - dc;
        const double unshifted_r = static_cast<double>(r - dr);
        const long long src_r =
            std::llround(kCenterRow + (unshifted_r - kCenterRow) / scale);
        double value = 1.0;
        if (src_c >= 0 && src_c < kBeatImageSize && src_r >= 0 &&
            src_r < kBeatImageSize)
          value = img.at(static_cast<int>(src_r), src_c);
        value += rng.uniform(0.0, 0.05);
        variant.at(r, c) = std::min(1.0, std::max(0.0, value));
      }
    }
    out.push_back(std::move(variant));
  }
  return out;
}

}  // namespace ecgkit
