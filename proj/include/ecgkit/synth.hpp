#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/image.hpp"
#include "ecgkit/imgproc.hpp"
#include "ecgkit/model.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/signal.hpp"

namespace ecgkit {

// Gaussian-bump parametric heartbeat. Widths are Gaussian sigmas in ms;
// Q and S amplitudes are magnitudes of negative deflections. The epsilon
// bump sits between the QRS end and the T onset, and the S-wave recovery
// side is stretched to the terminal activation duration.
struct EcgParams {
  double heart_rate_bpm = 75.0;
  double amp_p_mv = 0.15;
  double amp_q_mv = 0.1;
  double amp_r_mv = 1.2;
  double amp_s_mv = 0.25;
  double amp_t_mv = 0.3;
  double width_p_ms = 25.0;
  double width_q_ms = 6.0;
  double width_r_ms = 12.0;
  double width_s_ms = 8.0;
  double width_t_ms = 55.0;
  int t_polarity = +1;
  bool epsilon_present = false;
  double epsilon_amp_mv = 0.1;
  double epsilon_delay_ms = 90.0;
  double s_upstroke_ms = 35.0;  // terminal activation duration
  double noise_sd_mv = 0.0;
  double drift_amp_mv = 0.0;
  double drift_period_s = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(heart_rate_bpm >= 30.0 && heart_rate_bpm <= 220.0))
      throw InvalidInputError("heart rate outside [30, 220] bpm");
    if (epsilon_present && epsilon_amp_mv > 0.3)
      throw InvalidInputError("epsilon amplitude must stay low (<= 0.3 mV)");
    for (double w : {width_p_ms, width_q_ms, width_r_ms, width_s_ms, width_t_ms})
      if (!(w > 0.0)) throw InvalidInputError("wave widths must be positive");
    if (t_polarity != 1 && t_polarity != -1)
      throw InvalidInputError("t polarity must be +-1");
  }
};

struct BeatLandmarks {
  double r_ms = 0.0;
  double p_ms = 0.0;
  double q_ms = 0.0;
  double s_ms = 0.0;
  double t_ms = 0.0;
  double epsilon_ms = 0.0;  // 0 when absent
};

struct GeneratedEcg {
  Signal signal;
  std::vector<double> r_times_ms;
  std::vector<BeatLandmarks> landmarks;
  EcgParams params;
};

// Default generation rate: one sample per 600-dpi pixel column at
// 25 mm/s, so paper renders map 1:1 between samples and columns.
inline double default_synth_period_ms() { return 25.4 / 15.0; }  // ~1.6933

namespace synth_detail {

inline double gauss(double t, double center, double sigma) {
  const double z = (t - center) / sigma;
  return std::exp(-0.5 * z * z);
}

// Gaussian with different left/right widths.
inline double skew_gauss(double t, double center, double sl, double sr) {
  return gauss(t, center, t < center ? sl : sr);
}

}  // namespace synth_detail

// Deterministic parametric ECG with ground-truth landmarks.
inline GeneratedEcg generate_ecg(const EcgParams& params, double duration_s,
                                 double sample_period_ms = default_synth_period_ms()) {
  params.validate();
  const double period_ms = 60000.0 / params.heart_rate_bpm;
  if (duration_s * 1000.0 < period_ms)
    throw InvalidInputError("duration must cover at least one beat");

  GeneratedEcg out;
  out.params = params;
  out.signal.sample_period_ms = sample_period_ms;
  out.signal.t0_ms = 0.0;
  const std::size_t n = static_cast<std::size_t>(duration_s * 1000.0 / sample_period_ms);
  out.signal.samples.assign(n, 0.0);

  // Beat schedule: first R placed half a period in.
  const double first_r = period_ms / 2.0;
  for (double r = first_r; r < duration_s * 1000.0; r += period_ms) {
    out.r_times_ms.push_back(r);
    BeatLandmarks lm;
    lm.r_ms = r;
    lm.p_ms = r - 170.0;
    lm.q_ms = r - 22.0;
    lm.s_ms = r + 24.0;
    lm.t_ms = r + 270.0;
    lm.epsilon_ms = params.epsilon_present ? r + params.epsilon_delay_ms : 0.0;
    out.landmarks.push_back(lm);
  }

  const double s_right_sigma = std::max(params.width_s_ms, params.s_upstroke_ms / 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = out.signal.time_at(i);
    double v = 0.0;
    for (const auto& lm : out.landmarks) {
      if (std::abs(t - lm.r_ms) > period_ms) continue;
      v += params.amp_p_mv * synth_detail::gauss(t, lm.p_ms, params.width_p_ms);
      v -= params.amp_q_mv * synth_detail::gauss(t, lm.q_ms, params.width_q_ms);
      v += params.amp_r_mv * synth_detail::gauss(t, lm.r_ms, params.width_r_ms);
      v -= params.amp_s_mv *
           synth_detail::skew_gauss(t, lm.s_ms, params.width_s_ms, s_right_sigma);
      v += params.t_polarity * params.amp_t_mv *
           synth_detail::gauss(t, lm.t_ms, params.width_t_ms);
      if (params.epsilon_present)
        v += params.epsilon_amp_mv * synth_detail::gauss(t, lm.epsilon_ms, 10.0);
    }
    out.signal.samples[i] = v;
  }

  if (params.drift_amp_mv != 0.0) {
    const double w = 2.0 * 3.14159265358979323846 / (params.drift_period_s * 1000.0);
    for (std::size_t i = 0; i < n; ++i)
      out.signal.samples[i] += params.drift_amp_mv * std::sin(w * out.signal.time_at(i));
  }
  if (params.noise_sd_mv > 0.0) {
    Rng rng(params.seed);
    for (std::size_t i = 0; i < n; ++i)
      out.signal.samples[i] += rng.normal(0.0, params.noise_sd_mv);
  }
  return out;
}

// Scan-like page rendering. The trace maps one sample per pixel column;
// grid lines are drawn every millimeter at grid_color_level and random
// speckle dots are scattered at speckle_density.
struct PaperRenderSpec {
  int dpi = 600;
  double grid_color_level = 0.85;
  double speckle_density = 0.0;
  int line_thickness = 3;

  void validate() const {
    if (dpi <= 0) throw InvalidInputError("dpi must be positive");
    if (!(grid_color_level > 0.0 && grid_color_level < 1.0))
      throw InvalidInputError("grid level must lie in (0,1)");
    if (!(speckle_density >= 0.0 && speckle_density < 0.01))
      throw InvalidInputError("speckle density must stay below 1%");
    if (line_thickness < 1) throw InvalidInputError("line thickness must be >= 1");
  }
};

inline constexpr double kRenderTraceLevel = 0.05;
inline constexpr double kRenderSpeckleLevel = 0.10;
inline constexpr double kRenderVoltageSpanMv = 2.5;

struct RenderedPage {
  GrayImage image;
  int baseline_row = 0;
};

inline RenderedPage render_paper(const Signal& sig, const PaperRenderSpec& spec = {},
                                 std::uint64_t speckle_seed = 0) {
  sig.validate();
  spec.validate();

  const CalibrationSpec cal{25.0, 10.0, spec.dpi};
  const double px_per_mv = cal.px_per_mv();
  const int margin = 12;
  const int half_span = static_cast<int>(std::ceil(kRenderVoltageSpanMv * px_per_mv));
  const int rows = 2 * half_span + 2 * margin + 1;
  const int cols = static_cast<int>(sig.samples.size());
  const int baseline = margin + half_span;

  GrayImage page(rows, cols, 1.0, spec.dpi);

  // Grid, 1 mm pitch in both directions.
  const double px_per_mm = cal.px_per_mm();
  for (double y = 0.0; y < rows; y += px_per_mm) {
    const int r = static_cast<int>(std::lround(y));
    if (r >= rows) break;
    for (int c = 0; c < cols; ++c) page.at(r, c) = spec.grid_color_level;
  }
  for (double x = 0.0; x < cols; x += px_per_mm) {
    const int c = static_cast<int>(std::lround(x));
    if (c >= cols) break;
    for (int r = 0; r < rows; ++r) page.at(r, c) = spec.grid_color_level;
  }

  // Speckle under the trace.
  if (spec.speckle_density > 0.0) {
    Rng rng(speckle_seed);
    const auto total = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    const auto dots = static_cast<std::size_t>(spec.speckle_density * static_cast<double>(total));
    for (std::size_t i = 0; i < dots; ++i) {
      const int r = static_cast<int>(rng.uniform_int(0, rows - 1));
      const int c = static_cast<int>(rng.uniform_int(0, cols - 1));
      page.at(r, c) = kRenderSpeckleLevel;
    }
  }

  // Trace: vertical runs joined at midpoints, thickened horizontally.
  std::vector<int> row(static_cast<std::size_t>(cols));
  for (int c = 0; c < cols; ++c) {
    const double v = std::max(-kRenderVoltageSpanMv,
                              std::min(kRenderVoltageSpanMv, sig.samples[static_cast<std::size_t>(c)]));
    row[static_cast<std::size_t>(c)] = baseline - static_cast<int>(std::lround(v * px_per_mv));
  }
  const int half_t = spec.line_thickness / 2;
  for (int c = 0; c < cols; ++c) {
    int lo = row[static_cast<std::size_t>(c)];
    int hi = lo;
    if (c > 0) {
      const int mid = static_cast<int>(std::llround(
          (row[static_cast<std::size_t>(c - 1)] + row[static_cast<std::size_t>(c)]) / 2.0));
      lo = std::min(lo, mid);
      hi = std::max(hi, mid);
    }
    if (c + 1 < cols) {
      const int mid = static_cast<int>(std::llround(
          (row[static_cast<std::size_t>(c)] + row[static_cast<std::size_t>(c + 1)]) / 2.0));
      lo = std::min(lo, mid);
      hi = std::max(hi, mid);
    }
    for (int dc = -half_t; dc <= half_t; ++dc) {
      const int cc = c + dc;
      if (cc < 0 || cc >= cols) continue;
      for (int r = std::max(0, lo); r <= std::min(rows - 1, hi); ++r)
        page.at(r, cc) = kRenderTraceLevel;
    }
  }

  return {std::move(page), baseline};
}

// Class presets with parameter jitter. The abnormal preset carries the
// morphology markers: epsilon bump, inverted T, prolonged S upstroke.
inline EcgParams normal_preset(Rng& rng) {
  EcgParams p;
  p.heart_rate_bpm = rng.uniform(62.0, 95.0);
  p.amp_p_mv = rng.uniform(0.10, 0.20);
  p.amp_q_mv = rng.uniform(0.05, 0.15);
  p.amp_r_mv = rng.uniform(1.2, 1.7);
  p.amp_s_mv = rng.uniform(0.15, 0.30);
  p.amp_t_mv = rng.uniform(0.25, 0.35);
  p.t_polarity = +1;
  p.epsilon_present = false;
  p.s_upstroke_ms = rng.uniform(28.0, 38.0);
  p.noise_sd_mv = rng.uniform(0.005, 0.02);
  p.drift_amp_mv = rng.uniform(0.02, 0.12);
  p.drift_period_s = rng.uniform(2.0, 5.0);
  p.seed = rng.bits();
  return p;
}

inline EcgParams arvc_preset(Rng& rng) {
  EcgParams p;
  p.heart_rate_bpm = rng.uniform(62.0, 95.0);
  p.amp_p_mv = rng.uniform(0.10, 0.20);
  p.amp_q_mv = rng.uniform(0.05, 0.15);
  p.amp_r_mv = rng.uniform(1.0, 1.4);
  p.amp_s_mv = rng.uniform(0.30, 0.45);
  p.amp_t_mv = rng.uniform(0.30, 0.45);
  p.t_polarity = -1;
  p.epsilon_present = true;
  p.epsilon_amp_mv = rng.uniform(0.20, 0.28);
  p.epsilon_delay_ms = rng.uniform(85.0, 95.0);
  p.s_upstroke_ms = rng.uniform(62.0, 78.0);
  p.noise_sd_mv = rng.uniform(0.005, 0.02);
  p.drift_amp_mv = rng.uniform(0.02, 0.12);
  p.drift_period_s = rng.uniform(2.0, 5.0);
  p.seed = rng.bits();
  return p;
}

// Desk-scale labeled dataset: per patient, preset parameters, paper render,
// full digitization, detrend, beat isolation, beat rasters. Patient ids
// allow leak-free splitting downstream.
inline Dataset make_dataset(std::size_t n_normal, std::size_t n_arvc, std::uint64_t seed,
                            double duration_s = 10.0) {
  if (n_normal < 1 || n_arvc < 1)
    throw InvalidInputError("dataset needs at least one patient per class");

  Dataset dataset;
  const std::size_t total = n_normal + n_arvc;
  for (std::size_t pi = 0; pi < total; ++pi) {
    const bool abnormal = pi >= n_normal;
    Rng rng(seed + pi);
    const EcgParams params = abnormal ? arvc_preset(rng) : normal_preset(rng);
    const GeneratedEcg gen = generate_ecg(params, duration_s);

    PaperRenderSpec render_spec;
    render_spec.speckle_density = 0.0005;
    const RenderedPage page = render_paper(gen.signal, render_spec, seed + pi);

    const Signal digitized = digitize(page.image);
    const Signal detrended = detrend_median(digitized);
    const std::vector<std::size_t> peaks = detect_r_peaks(detrended);
    const std::vector<Beat> beats = segment_beats(detrended, peaks);

    char id[32];
    std::snprintf(id, sizeof(id), "%c%03zu", abnormal ? 'A' : 'N', pi);
    for (const Beat& b : beats) {
      LabeledBeat lb;
      lb.image = render_beat_image(b);
      lb.label = abnormal ? 1 : 0;
      lb.patient_id = id;
      dataset.push_back(std::move(lb));
    }
  }
  return dataset;
}

}  // namespace ecgkit
