#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/image.hpp"
#include "ecgkit/signal.hpp"

namespace ecgkit {

// Weighted neighborhood filter for removing incorrectly-black pixels from a
// thresholded scan. k is the spatial extent (odd), c the acceptance
// threshold on the weighted white fraction of the 24 non-central
// neighbors. For k = 5 the outer ring carries 0.6 of the weight and the
// inner ring 0.4; for other odd k the per-pixel weight is uniform.
struct DespeckleFilter {
  int k = 5;
  double c = 0.5;
  double outer_weight_total = 0.6;
  double inner_weight_total = 0.4;

  void validate() const {
    if (k < 3 || k % 2 == 0)
      throw InvalidFilterError("despeckle extent must be odd and >= 3");
    if (!(c > 0.0 && c < 1.0))
      throw InvalidFilterError("despeckle threshold must lie in (0,1)");
    if (std::abs(outer_weight_total + inner_weight_total - 1.0) > 1e-12)
      throw InvalidFilterError("ring weights must sum to 1");
  }
};

// Paper geometry used to map pixels to (ms, mV).
struct CalibrationSpec {
  double paper_speed_mm_s = 25.0;
  double gain_mm_mv = 10.0;
  int dpi = 600;

  void validate() const {
    if (!(paper_speed_mm_s > 0.0) || !(gain_mm_mv > 0.0) || dpi <= 0)
      throw InvalidInputError("calibration fields must be positive");
  }

  double px_per_mm() const { return dpi / 25.4; }
  double px_per_mv() const { return px_per_mm() * gain_mm_mv; }
  // Time step of one pixel column in ms.
  double ms_per_px() const { return 25.4 / (dpi * paper_speed_mm_s) * 1000.0; }
  // Voltage step of one pixel row in mV.
  double mv_per_px() const { return 25.4 / (dpi * gain_mm_mv); }
};

// One contour sample per image column; empty optional marks a column with
// no black pixel.
using Contour = std::vector<std::optional<int>>;

namespace detail {

// Empirical-CDF percentile with no interpolation: the smallest value v in
// the sample with F(v-0) <= q <= F(v). Reduces to the order statistic at
// index ceil(q*K) - 1.
inline double cdf_percentile(std::vector<double>& values, double q) {
  const std::size_t k = values.size();
  double idx = std::ceil(q * static_cast<double>(k)) - 1.0;
  if (idx < 0.0) idx = 0.0;
  std::size_t i = static_cast<std::size_t>(idx);
  if (i >= k) i = k - 1;
  std::nth_element(values.begin(), values.begin() + i, values.end());
  return values[i];
}

}  // namespace detail

// Threshold the scan into ink and paper. p is the expected paper fraction
// (grid and background); the cut x_q sits at the empirical-CDF percentile
// q = 1 - p of the pixel values, so that only the dark tail -- the trace
// and speckle, at most a (1-p) share of the page -- maps to black.
// Pixels strictly below x_q become black, pixels at or above it white.
// On a page whose darkest sub-(1-p) mass is the trace, x_q lands exactly
// on the grid gray level and the grid is eliminated.
inline BinaryImage binarize_percentile(const GrayImage& img, double p = 0.95) {
  img.validate();
  if (!(p > 0.0 && p < 1.0))
    throw InvalidInputError("percentile must lie in (0,1)");
  std::vector<double> values = img.pixels;
  const double cut = detail::cdf_percentile(values, 1.0 - p);
  BinaryImage out(img.rows, img.cols, 1, img.dpi);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = img.pixels[i] < cut ? 0 : 1;
  return out;
}

// Same as above but also reports the threshold that was applied.
inline BinaryImage binarize_percentile(const GrayImage& img, double p,
                                       double& threshold_out) {
  img.validate();
  if (!(p > 0.0 && p < 1.0))
    throw InvalidInputError("percentile must lie in (0,1)");
  std::vector<double> values = img.pixels;
  threshold_out = detail::cdf_percentile(values, 1.0 - p);
  BinaryImage out(img.rows, img.cols, 1, img.dpi);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = img.pixels[i] < threshold_out ? 0 : 1;
  return out;
}

namespace detail {

// Per-pixel neighbor weights for the despeckle window, indexed by
// Chebyshev ring. k = 5: inner ring (8 px) shares 0.4, outer ring (16 px)
// shares 0.6. Other odd k: uniform 1/(k^2-1).
inline std::vector<double> ring_weights(const DespeckleFilter& f) {
  const int radius = f.k / 2;
  std::vector<double> w(static_cast<std::size_t>(radius) + 1, 0.0);
  if (f.k == 5) {
    w[1] = f.inner_weight_total / 8.0;
    w[2] = f.outer_weight_total / 16.0;
  } else {
    const double per_pixel = 1.0 / (static_cast<double>(f.k) * f.k - 1.0);
    for (int r = 1; r <= radius; ++r) w[static_cast<std::size_t>(r)] = per_pixel;
  }
  return w;
}

}  // namespace detail

// Remove incorrectly-black pixels. Border bands of width floor(k/2) are
// forced white; every interior black pixel is flipped to white when the
// weighted white fraction of its k*k-1 neighbors exceeds f.c. All
// decisions read the input image, so the pass is order-independent and
// white pixels never turn black.
inline BinaryImage despeckle(const BinaryImage& bw, const DespeckleFilter& f = {}) {
  f.validate();
  if (f.k > std::min(bw.rows, bw.cols))
    throw InvalidFilterError("despeckle extent exceeds image size");
  const int radius = f.k / 2;
  const std::vector<double> w = detail::ring_weights(f);

  BinaryImage out = bw;
  // Border bands.
  for (int r = 0; r < bw.rows; ++r)
    for (int c = 0; c < bw.cols; ++c)
      if (r < radius || r >= bw.rows - radius || c < radius || c >= bw.cols - radius)
        out.at(r, c) = 1;

  for (int r = radius; r < bw.rows - radius; ++r) {
    for (int c = radius; c < bw.cols - radius; ++c) {
      if (!bw.is_black(r, c)) continue;
      double white_fraction = 0.0;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int ring = std::max(std::abs(dr), std::abs(dc));
          if (bw.at(r + dr, c + dc) == 1)
            white_fraction += w[static_cast<std::size_t>(ring)];
        }
      }
      if (white_fraction > f.c) out.at(r, c) = 1;
    }
  }
  return out;
}

// Column-wise mean contour: for each column the middle black pixel, i.e.
// the lower median of the black-row indices. Columns without black pixels
// are left absent.
inline Contour extract_contour(const BinaryImage& bw) {
  Contour contour(static_cast<std::size_t>(bw.cols));
  std::vector<int> rows;
  for (int c = 0; c < bw.cols; ++c) {
    rows.clear();
    for (int r = 0; r < bw.rows; ++r)
      if (bw.is_black(r, c)) rows.push_back(r);
    if (!rows.empty())
      contour[static_cast<std::size_t>(c)] = rows[(rows.size() - 1) / 2];
  }
  return contour;
}

// Most frequent contour row; ties resolved to the smallest row index.
// Used as the ISO-line estimate when no explicit baseline is given.
inline int modal_contour_row(const Contour& contour) {
  std::map<int, int> counts;
  for (const auto& p : contour)
    if (p) ++counts[*p];
  if (counts.empty()) throw EmptyTraceError("contour has no black columns");
  int best_row = counts.begin()->first;
  int best_count = 0;
  for (const auto& [row, n] : counts) {
    if (n > best_count) {
      best_count = n;
      best_row = row;
    }
  }
  return best_row;
}

// Convert a contour to a calibrated Signal. Absent columns are linearly
// interpolated from their nearest present neighbors; leading/trailing gaps
// hold the nearest value. Voltage is measured upward from baseline_row.
inline Signal calibrate(const Contour& contour, const CalibrationSpec& cal,
                        int baseline_row) {
  cal.validate();
  if (contour.empty()) throw EmptyTraceError("empty contour");

  const std::size_t n = contour.size();
  std::vector<double> rows(n, 0.0);
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < n; ++i)
    if (contour[i]) present.push_back(i);
  if (present.empty()) throw EmptyTraceError("contour has no black columns");

  // Fill by linear interpolation between present columns.
  for (std::size_t i = 0; i < n; ++i) {
    if (contour[i]) {
      rows[i] = static_cast<double>(*contour[i]);
      continue;
    }
    auto next = std::lower_bound(present.begin(), present.end(), i);
    if (next == present.begin()) {
      rows[i] = static_cast<double>(*contour[present.front()]);
    } else if (next == present.end()) {
      rows[i] = static_cast<double>(*contour[present.back()]);
    } else {
      const std::size_t hi = *next;
      const std::size_t lo = *(next - 1);
      const double t = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      rows[i] = (1.0 - t) * static_cast<double>(*contour[lo]) +
                t * static_cast<double>(*contour[hi]);
    }
  }

  Signal sig;
  sig.sample_period_ms = cal.ms_per_px();
  sig.t0_ms = 0.0;
  sig.samples.resize(n);
  const double mv_per_px = cal.mv_per_px();
  for (std::size_t i = 0; i < n; ++i)
    sig.samples[i] = (static_cast<double>(baseline_row) - rows[i]) * mv_per_px;
  return sig;
}

// Full digitization chain with an automatically estimated baseline.
struct DigitizeReport {
  double threshold = 0.0;
  std::size_t flipped_pixels = 0;
  std::size_t absent_columns = 0;
  int baseline_row = 0;
};

inline Signal digitize(const GrayImage& img, const CalibrationSpec& cal = {},
                       const DespeckleFilter& filter = {}, double percentile = 0.95,
                       DigitizeReport* report = nullptr,
                       std::optional<int> baseline_row = std::nullopt) {
  double threshold = 0.0;
  BinaryImage bw = binarize_percentile(img, percentile, threshold);
  const std::size_t black_before = bw.count_black();
  bw = despeckle(bw, filter);
  const std::size_t black_after = bw.count_black();
  const Contour contour = extract_contour(bw);
  std::size_t absent = 0;
  for (const auto& p : contour) absent += !p;
  const int baseline = baseline_row ? *baseline_row : modal_contour_row(contour);
  if (report) {
    report->threshold = threshold;
    report->flipped_pixels = black_before - black_after;
    report->absent_columns = absent;
    report->baseline_row = baseline;
  }
  return calibrate(contour, cal, baseline);
}

}  // namespace ecgkit
