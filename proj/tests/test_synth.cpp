#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "ecgkit/imgproc.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/synth.hpp"

using namespace ecgkit;

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += a[i];
    sy += b[i];
    sxx += a[i] * a[i];
    syy += b[i] * b[i];
    sxy += a[i] * b[i];
  }
  const double nn = static_cast<double>(n);
  return (sxy - sx * sy / nn) /
         std::sqrt((sxx - sx * sx / nn) * (syy - sy * sy / nn));
}

}  // namespace

TEST_CASE("generator beat count and determinism", "[synth]") {
  EcgParams params;
  params.heart_rate_bpm = 75.0;
  const GeneratedEcg a = generate_ecg(params, 10.0);
  // Beats at 400, 1200, ... ms: 12 complete at 75 bpm in 10 s.
  CHECK(a.r_times_ms.size() == 12);
  const GeneratedEcg b = generate_ecg(params, 10.0);
  CHECK(a.signal.samples == b.signal.samples);

  EcgParams noisy = params;
  noisy.noise_sd_mv = 0.02;
  noisy.seed = 5;
  const GeneratedEcg c = generate_ecg(noisy, 10.0);
  const GeneratedEcg d = generate_ecg(noisy, 10.0);
  CHECK(c.signal.samples == d.signal.samples);
  CHECK(c.signal.samples != a.signal.samples);
}

TEST_CASE("clean generation is exactly periodic beat to beat", "[synth]") {
  EcgParams params;
  params.heart_rate_bpm = 80.0;
  params.noise_sd_mv = 0.0;
  params.drift_amp_mv = 0.0;
  params.epsilon_present = false;
  const GeneratedEcg gen = generate_ecg(params, 12.0);

  const double period_samples = 60000.0 / 80.0 / gen.signal.sample_period_ms;
  const std::size_t stride = static_cast<std::size_t>(std::lround(period_samples));
  // Compare interior beats at integer-sample offsets: 750 ms at the
  // default rate is not an integer number of samples, so probe a beat pair
  // two periods apart where it is nearly exact.
  double max_dev = 0.0;
  const std::size_t start = 4 * stride;
  for (std::size_t i = 0; i < stride; ++i) {
    const double va = gen.signal.samples[start + i];
    const double vb = gen.signal.samples[start + 2 * stride + i];
    max_dev = std::max(max_dev, std::abs(va - vb));
  }
  // stride rounding leaves a sub-sample phase error; the waveform slope
  // bounds the mismatch well under a millivolt but not at 1e-12. Use an
  // exactly periodic rate instead for the strict check.
  EcgParams exact = params;
  exact.heart_rate_bpm = 60.0;  // 1000 ms period
  const GeneratedEcg gen2 = generate_ecg(exact, 12.0, 2.0);  // 500 samples/beat
  const std::size_t stride2 = 500;
  double dev2 = 0.0;
  for (std::size_t i = 0; i < stride2; ++i) {
    const double va = gen2.signal.samples[2 * stride2 + i];
    const double vb = gen2.signal.samples[5 * stride2 + i];
    dev2 = std::max(dev2, std::abs(va - vb));
  }
  CHECK(dev2 < 1e-12);
}

TEST_CASE("landmarks agree with the rendered waveform", "[synth]") {
  EcgParams params;
  params.noise_sd_mv = 0.0;
  params.drift_amp_mv = 0.0;
  const GeneratedEcg gen = generate_ecg(params, 10.0);
  for (const auto& lm : gen.landmarks) {
    // The R landmark is within one sample of the local waveform argmax.
    const std::size_t center =
        static_cast<std::size_t>(std::lround(lm.r_ms / gen.signal.sample_period_ms));
    std::size_t best = center;
    for (std::size_t i = center - 30; i <= center + 30; ++i)
      if (gen.signal.samples[i] > gen.signal.samples[best]) best = i;
    CHECK(std::abs(static_cast<long long>(best) - static_cast<long long>(center)) <= 1);
  }
}

TEST_CASE("presets are class-consistent and peak-compatible", "[synth]") {
  Rng rng(17);
  const EcgParams normal = normal_preset(rng);
  const EcgParams arvc = arvc_preset(rng);
  CHECK_FALSE(normal.epsilon_present);
  CHECK(arvc.epsilon_present);
  CHECK(normal.t_polarity == 1);
  CHECK(arvc.t_polarity == -1);
  CHECK(arvc.s_upstroke_ms >= 55.0);

  EcgParams n2 = normal, a2 = arvc;
  n2.heart_rate_bpm = a2.heart_rate_bpm = 75.0;
  n2.noise_sd_mv = a2.noise_sd_mv = 0.01;
  n2.drift_amp_mv = a2.drift_amp_mv = 0.05;
  const GeneratedEcg gn = generate_ecg(n2, 10.0);
  const GeneratedEcg ga = generate_ecg(a2, 10.0);
  const auto pn = detect_r_peaks(detrend_median(gn.signal));
  const auto pa = detect_r_peaks(detrend_median(ga.signal));
  CHECK(pn.size() == gn.r_times_ms.size());
  CHECK(pa.size() == ga.r_times_ms.size());
}

TEST_CASE("noiseless grid-free render inverts to pixel quantization", "[synth]") {
  // Geometry check on the pure render -> binarize -> contour -> calibrate
  // path: a slow trace (|row step| <= 1 px per column) recovers each
  // sample to within one pixel of voltage quantization.
  Signal slow;
  slow.sample_period_ms = default_synth_period_ms();
  slow.samples.resize(2400);
  for (std::size_t i = 0; i < slow.samples.size(); ++i) {
    const double t_s = slow.time_at(i) / 1000.0;
    slow.samples[i] = 0.8 * std::sin(2.0 * 3.14159265358979 * 0.4 * t_s);
  }

  PaperRenderSpec spec;
  spec.speckle_density = 0.0;
  spec.line_thickness = 1;
  // Grid-free: push the grid level to nearly-white so the dark tail is
  // exactly the trace.
  spec.grid_color_level = 0.999;
  const RenderedPage page = render_paper(slow, spec);

  const BinaryImage bw = binarize_percentile(page.image, 0.95);
  const Contour contour = extract_contour(bw);
  const CalibrationSpec cal;
  const Signal recovered = calibrate(contour, cal, page.baseline_row);

  REQUIRE(recovered.samples.size() == slow.samples.size());
  const double quantum = cal.mv_per_px();
  double max_err = 0.0;
  for (std::size_t i = 0; i < recovered.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(recovered.samples[i] - slow.samples[i]));
  CHECK(max_err <= quantum);
}

TEST_CASE("speckle is removed without harming the trace", "[synth]") {
  EcgParams params;
  params.noise_sd_mv = 0.0;
  params.drift_amp_mv = 0.0;
  const GeneratedEcg gen = generate_ecg(params, 6.0);

  PaperRenderSpec clean_spec;
  clean_spec.speckle_density = 0.0;
  PaperRenderSpec speckled_spec;
  speckled_spec.speckle_density = 0.001;

  const RenderedPage clean = render_paper(gen.signal, clean_spec, 11);
  const RenderedPage speckled = render_paper(gen.signal, speckled_spec, 11);

  const BinaryImage bw_clean = binarize_percentile(clean.image, 0.95);
  const BinaryImage bw_speckled = binarize_percentile(speckled.image, 0.95);
  const BinaryImage out = despeckle(bw_speckled);

  // Trace mask from the clean render.
  const BinaryImage out_clean = despeckle(bw_clean);
  std::size_t speck_total = 0, speck_left = 0, trace_total = 0, trace_changed = 0;
  for (int r = 2; r < out.rows - 2; ++r) {
    for (int c = 2; c < out.cols - 2; ++c) {
      const bool trace = bw_clean.at(r, c) == 0;
      const bool speck = !trace && bw_speckled.at(r, c) == 0;
      if (speck) {
        ++speck_total;
        if (out.at(r, c) == 0) ++speck_left;
      }
      if (trace) {
        ++trace_total;
        if (out.at(r, c) != out_clean.at(r, c)) ++trace_changed;
      }
    }
  }
  REQUIRE(speck_total > 100);
  CHECK(static_cast<double>(speck_left) <= 0.01 * static_cast<double>(speck_total));
  CHECK(static_cast<double>(trace_changed) <= 0.005 * static_cast<double>(trace_total));
}

TEST_CASE("full render round trip stays faithful on both presets", "[synth]") {
  Rng rng(31);
  for (int trial = 0; trial < 2; ++trial) {
    const EcgParams params = trial == 0 ? normal_preset(rng) : arvc_preset(rng);
    const GeneratedEcg gen = generate_ecg(params, 6.0);
    PaperRenderSpec spec;
    spec.speckle_density = 0.002;
    const RenderedPage page = render_paper(gen.signal, spec, 77 + trial);
    const Signal digitized = digitize(page.image);
    REQUIRE(digitized.samples.size() == gen.signal.samples.size());
    CHECK(pearson(digitized.samples, gen.signal.samples) >= 0.95);
  }
}

TEST_CASE("dataset generation is deterministic and balanced", "[synth]") {
  const Dataset a = make_dataset(3, 3, 123, 8.0);
  const Dataset b = make_dataset(3, 3, 123, 8.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.pixels == b[i].image.pixels);
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].patient_id == b[i].patient_id);
  }

  // 6 patients x 8 s x 62-95 bpm: 8-12 beats per strip.
  CHECK(a.size() >= 36);
  CHECK(a.size() <= 80);

  std::size_t abnormal = 0;
  std::set<std::string> patients;
  for (const auto& beat : a) {
    abnormal += beat.label;
    patients.insert(beat.patient_id);
  }
  CHECK(patients.size() == 6);
  const double ratio = static_cast<double>(abnormal) / static_cast<double>(a.size());
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.7);
}

TEST_CASE("generator parameter validation", "[synth]") {
  EcgParams params;
  params.heart_rate_bpm = 300.0;
  CHECK_THROWS_AS(generate_ecg(params, 10.0), InvalidInputError);

  EcgParams eps;
  eps.epsilon_present = true;
  eps.epsilon_amp_mv = 0.5;
  CHECK_THROWS_AS(generate_ecg(eps, 10.0), InvalidInputError);

  EcgParams ok;
  CHECK_THROWS_AS(generate_ecg(ok, 0.1), InvalidInputError);
}
