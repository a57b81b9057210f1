#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/fft.hpp"
#include "ecgkit/signal.hpp"

namespace ecgkit {

inline constexpr double kBandLowHz = 1.0;
inline constexpr double kBandHighHz = 20.0;
inline constexpr double kBandStepHz = 0.25;
inline constexpr double kGridTargetRateHz = 550.0;
inline constexpr std::size_t kGridTargetLen = 2200;

struct AmplitudeSpectrum {
  std::vector<double> frequencies_hz;
  std::vector<double> amplitudes;
  std::size_t n_samples = 0;
  double sample_rate_hz = 0.0;
};

// Cohort of spectra on a shared frequency grid, one row per subject.
struct SpectrumTable {
  std::vector<double> frequencies_hz;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> subject_ids;
  std::string cohort;
};

// Single-sided amplitude spectrum, 2|X_k|/N for bins k = 0..floor(N/2) at
// frequencies k*fs/N.
inline AmplitudeSpectrum amplitude_spectrum(const Signal& sig) {
  sig.validate();
  const std::size_t n = sig.samples.size();
  if (n < 2) throw InvalidInputError("spectrum needs at least 2 samples");

  const auto x = fft::dft_real(sig.samples);
  const double fs = sig.sample_rate_hz();
  AmplitudeSpectrum spec;
  spec.n_samples = n;
  spec.sample_rate_hz = fs;
  const std::size_t bins = n / 2 + 1;
  spec.frequencies_hz.resize(bins);
  spec.amplitudes.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    spec.frequencies_hz[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    spec.amplitudes[k] = 2.0 * std::abs(x[k]) / static_cast<double>(n);
  }
  return spec;
}

// Linear-interpolation resample to exactly target_len samples at
// target_rate, so the DFT bin width becomes target_rate/target_len
// (0.25 Hz with the defaults).
inline Signal resample_for_grid(const Signal& sig,
                                double target_rate_hz = kGridTargetRateHz,
                                std::size_t target_len = kGridTargetLen) {
  sig.validate();
  if (!(target_rate_hz > 0.0) || target_len < 2)
    throw InvalidInputError("bad resample target");
  const double duration_s = sig.duration_ms() / 1000.0;
  if (duration_s + 1e-12 < static_cast<double>(target_len) / target_rate_hz)
    throw InvalidInputError("signal too short to resample onto the analysis grid");

  const double step = sig.sample_rate_hz() / target_rate_hz;  // input samples per output
  const std::size_t n = sig.samples.size();
  Signal out;
  out.sample_period_ms = 1000.0 / target_rate_hz;
  out.t0_ms = sig.t0_ms;
  out.samples.resize(target_len);
  for (std::size_t i = 0; i < target_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= n - 1) i0 = n - 2;
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] =
        (1.0 - frac) * sig.samples[i0] + frac * sig.samples[i0 + 1];
  }
  return out;
}

// Restrict to the 1..20 Hz grid (0.25 Hz step, 77 bins) and divide by the
// in-band maximum.
inline AmplitudeSpectrum normalize_and_band(const AmplitudeSpectrum& spec) {
  const std::size_t points = static_cast<std::size_t>(
      std::lround((kBandHighHz - kBandLowHz) / kBandStepHz)) + 1;

  AmplitudeSpectrum out;
  out.n_samples = spec.n_samples;
  out.sample_rate_hz = spec.sample_rate_hz;
  out.frequencies_hz.resize(points);
  out.amplitudes.resize(points);

  for (std::size_t i = 0; i < points; ++i) {
    const double f = kBandLowHz + kBandStepHz * static_cast<double>(i);
    // Bins must align exactly after resample_for_grid; locate by nearest.
    auto it = std::lower_bound(spec.frequencies_hz.begin(), spec.frequencies_hz.end(),
                               f - 1e-6);
    if (it == spec.frequencies_hz.end() || std::abs(*it - f) > 1e-6)
      throw GridMismatchError("spectrum grid does not contain " + std::to_string(f) + " Hz");
    out.frequencies_hz[i] = f;
    out.amplitudes[i] =
        spec.amplitudes[static_cast<std::size_t>(it - spec.frequencies_hz.begin())];
  }

  const double peak = *std::max_element(out.amplitudes.begin(), out.amplitudes.end());
  if (!(peak > 0.0))
    throw NormalizationError("all-zero amplitude band cannot be normalized");
  for (double& a : out.amplitudes) a /= peak;
  return out;
}

struct MeanSpectrumPoint {
  double frequency_hz = 0.0;
  double mean = 0.0;
  std::optional<double> sd;  // absent for single-row tables
};

// Per-frequency arithmetic mean and sample standard deviation (n-1).
inline std::vector<MeanSpectrumPoint> mean_spectrum(const SpectrumTable& table) {
  if (table.rows.empty()) throw InvalidInputError("empty spectrum table");
  const std::size_t bins = table.frequencies_hz.size();
  for (const auto& row : table.rows)
    if (row.size() != bins) throw GridMismatchError("row length differs from grid");

  std::vector<MeanSpectrumPoint> out(bins);
  const double n = static_cast<double>(table.rows.size());
  for (std::size_t b = 0; b < bins; ++b) {
    double sum = 0.0;
    for (const auto& row : table.rows) sum += row[b];
    const double mean = sum / n;
    out[b].frequency_hz = table.frequencies_hz[b];
    out[b].mean = mean;
    if (table.rows.size() > 1) {
      double ss = 0.0;
      for (const auto& row : table.rows) {
        const double d = row[b] - mean;
        ss += d * d;
      }
      out[b].sd = std::sqrt(ss / (n - 1.0));
    }
  }
  return out;
}

// Full per-subject pipeline: detrended signal -> analysis grid ->
// normalized banded spectrum row.
inline std::vector<double> banded_spectrum_row(const Signal& detrended) {
  const Signal grid = resample_for_grid(detrended);
  const AmplitudeSpectrum spec = amplitude_spectrum(grid);
  return normalize_and_band(spec).amplitudes;
}

inline std::vector<double> band_grid_frequencies() {
  const std::size_t points = static_cast<std::size_t>(
      std::lround((kBandHighHz - kBandLowHz) / kBandStepHz)) + 1;
  std::vector<double> f(points);
  for (std::size_t i = 0; i < points; ++i)
    f[i] = kBandLowHz + kBandStepHz * static_cast<double>(i);
  return f;
}

}  // namespace ecgkit
