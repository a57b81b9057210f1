#include <catch2/catch.hpp>

#include <cmath>
#include <complex>

#include "ecgkit/fft.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/spectral.hpp"

using namespace ecgkit;

namespace {

constexpr double kTau = 6.283185307179586476925287;

// Brute-force O(N^2) DFT, the reference the fast path must agree with.
std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -kTau * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

Signal sine_signal(double amp, double freq_hz, double rate_hz, std::size_t n) {
  Signal s;
  s.sample_period_ms = 1000.0 / rate_hz;
  s.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    s.samples[t] = amp * std::sin(kTau * freq_hz * static_cast<double>(t) / rate_hz);
  return s;
}

}  // namespace

TEST_CASE("fft matches the direct DFT for power-of-two and odd sizes", "[spectral]") {
  Rng rng(1234);
  for (std::size_t n : {8u, 64u, 100u, 550u, 2200u}) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    const auto fast = fft::dft_real(x);
    const auto slow = direct_dft(x);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(std::abs(fast[k].real() - slow[k].real()) < 1e-9);
      CHECK(std::abs(fast[k].imag() - slow[k].imag()) < 1e-9);
    }
  }
}

TEST_CASE("pure sine recovers its amplitude at its bin", "[spectral]") {
  // 5 Hz sine, 550 Hz, 2200 samples -> exactly bin 20, amplitude 0.8.
  const Signal sig = sine_signal(0.8, 5.0, 550.0, 2200);
  const AmplitudeSpectrum spec = amplitude_spectrum(sig);
  REQUIRE(spec.frequencies_hz.size() == 1101);
  CHECK(spec.frequencies_hz[20] == Approx(5.0).margin(1e-12));
  CHECK(spec.amplitudes[20] == Approx(0.8).margin(1e-9));
  for (std::size_t k = 0; k < spec.amplitudes.size(); ++k)
    if (k != 20) CHECK(spec.amplitudes[k] < 1e-9);
}

TEST_CASE("all-zero signal has an all-zero spectrum", "[spectral]") {
  Signal sig;
  sig.sample_period_ms = 2.0;
  sig.samples.assign(512, 0.0);
  const AmplitudeSpectrum spec = amplitude_spectrum(sig);
  for (double a : spec.amplitudes) CHECK(a == 0.0);
}

TEST_CASE("amplitude spectrum rejects non-finite input", "[spectral]") {
  Signal sig;
  sig.sample_period_ms = 2.0;
  sig.samples.assign(64, 0.0);
  sig.samples[5] = std::nan("");
  CHECK_THROWS_AS(amplitude_spectrum(sig), InvalidInputError);
}

TEST_CASE("spectrum is linear in signal amplitude", "[spectral]") {
  Rng rng(9);
  Signal sig;
  sig.sample_period_ms = 1000.0 / 550.0;
  sig.samples.resize(1100);
  for (double& v : sig.samples) v = rng.normal();
  const auto base = amplitude_spectrum(sig);
  Signal scaled = sig;
  for (double& v : scaled.samples) v *= 2.5;
  const auto big = amplitude_spectrum(scaled);
  for (std::size_t k = 0; k < base.amplitudes.size(); ++k)
    CHECK(big.amplitudes[k] == Approx(2.5 * base.amplitudes[k]).margin(1e-12));
}

TEST_CASE("resample identity when already on the grid", "[spectral]") {
  Rng rng(2);
  Signal sig;
  sig.sample_period_ms = 1000.0 / 550.0;
  sig.samples.resize(2200);
  for (double& v : sig.samples) v = rng.normal();
  const Signal out = resample_for_grid(sig);
  REQUIRE(out.samples.size() == 2200);
  for (std::size_t i = 0; i < 2200; ++i)
    CHECK(out.samples[i] == Approx(sig.samples[i]).margin(1e-12));
}

TEST_CASE("resample from the digitization rate onto the analysis grid", "[spectral]") {
  // 590.55 samples/s for >= 4 s.
  const double rate = 15000.0 / 25.4;
  const Signal sig = sine_signal(1.0, 1.0, rate, 2800);
  const Signal out = resample_for_grid(sig);
  CHECK(out.samples.size() == 2200);
  CHECK(out.sample_rate_hz() == Approx(550.0));

  // 1 Hz content survives with < 1% amplitude error.
  const AmplitudeSpectrum spec = amplitude_spectrum(out);
  CHECK(spec.amplitudes[4] == Approx(1.0).margin(0.01));
}

TEST_CASE("resample rejects too-short signals", "[spectral]") {
  Signal sig;
  sig.sample_period_ms = 1000.0 / 550.0;
  sig.samples.assign(2199, 0.0);  // 3.998 s < 4 s
  CHECK_THROWS_AS(resample_for_grid(sig), InvalidInputError);
}

TEST_CASE("band grid has 77 exactly-aligned bins and unit maximum", "[spectral]") {
  const Signal sig = sine_signal(0.5, 5.0, 550.0, 2200);
  const AmplitudeSpectrum banded = normalize_and_band(amplitude_spectrum(sig));
  REQUIRE(banded.frequencies_hz.size() == 77);
  CHECK(banded.frequencies_hz.front() == Approx(1.0));
  CHECK(banded.frequencies_hz.back() == Approx(20.0));
  CHECK(banded.frequencies_hz[1] - banded.frequencies_hz[0] == Approx(0.25));

  double peak = 0.0;
  for (double a : banded.amplitudes) peak = std::max(peak, a);
  CHECK(peak == 1.0);
  // Single in-band sine: 1 at 5 Hz, ~0 elsewhere.
  for (std::size_t i = 0; i < banded.frequencies_hz.size(); ++i) {
    if (std::abs(banded.frequencies_hz[i] - 5.0) < 1e-9)
      CHECK(banded.amplitudes[i] == 1.0);
    else
      CHECK(banded.amplitudes[i] < 1e-6);
  }
}

TEST_CASE("normalized band is scale invariant and idempotent", "[spectral]") {
  Rng rng(31);
  Signal sig;
  sig.sample_period_ms = 1000.0 / 550.0;
  sig.samples.resize(2200);
  for (double& v : sig.samples) v = rng.normal();

  const auto banded = normalize_and_band(amplitude_spectrum(sig));
  Signal scaled = sig;
  for (double& v : scaled.samples) v *= 17.0;
  const auto banded_scaled = normalize_and_band(amplitude_spectrum(scaled));
  for (std::size_t i = 0; i < banded.amplitudes.size(); ++i)
    CHECK(banded_scaled.amplitudes[i] == Approx(banded.amplitudes[i]).margin(1e-12));

  const auto twice = normalize_and_band(banded);
  for (std::size_t i = 0; i < banded.amplitudes.size(); ++i)
    CHECK(twice.amplitudes[i] == banded.amplitudes[i]);
}

TEST_CASE("normalization of an all-zero band fails", "[spectral]") {
  AmplitudeSpectrum spec;
  spec.frequencies_hz = band_grid_frequencies();
  spec.amplitudes.assign(spec.frequencies_hz.size(), 0.0);
  CHECK_THROWS_AS(normalize_and_band(spec), NormalizationError);
}

TEST_CASE("band extraction requires aligned bins", "[spectral]") {
  const Signal sig = sine_signal(1.0, 3.0, 500.0, 1000);  // 0.5 Hz bins
  CHECK_THROWS_AS(normalize_and_band(amplitude_spectrum(sig)), GridMismatchError);
}

TEST_CASE("mean spectrum per-bin statistics", "[spectral]") {
  SpectrumTable table;
  table.frequencies_hz = {1.0, 2.0};

  SECTION("two rows") {
    table.rows = {{0.2, 1.0}, {0.4, 1.0}};
    table.subject_ids = {"a", "b"};
    const auto mean = mean_spectrum(table);
    CHECK(mean[0].mean == Approx(0.3));
    REQUIRE(mean[0].sd.has_value());
    // sd of {0.2, 0.4} = sqrt(0.02)
    CHECK(*mean[0].sd == Approx(std::sqrt(0.02)).epsilon(1e-12));
    CHECK(*mean[1].sd == 0.0);
  }
  SECTION("single row leaves sd absent") {
    table.rows = {{0.5, 0.25}};
    table.subject_ids = {"a"};
    const auto mean = mean_spectrum(table);
    CHECK(mean[0].mean == 0.5);
    CHECK_FALSE(mean[0].sd.has_value());
  }
  SECTION("identical rows have zero sd") {
    table.rows = {{0.5, 0.25}, {0.5, 0.25}, {0.5, 0.25}};
    table.subject_ids = {"a", "b", "c"};
    const auto mean = mean_spectrum(table);
    CHECK(*mean[0].sd == 0.0);
    CHECK(*mean[1].sd == 0.0);
  }
}
