#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ecgkit/error.hpp"

namespace ecgkit {

// Uniformly sampled voltage trace. Samples are millivolts, the sample
// period is milliseconds, t0 is the timestamp of samples[0].
struct Signal {
  std::vector<double> samples;
  double sample_period_ms = 1.0;
  double t0_ms = 0.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  double sample_rate_hz() const { return 1000.0 / sample_period_ms; }
  double duration_ms() const {
    return static_cast<double>(samples.size()) * sample_period_ms;
  }
  double time_at(std::size_t i) const {
    return t0_ms + static_cast<double>(i) * sample_period_ms;
  }

  void validate() const {
    if (samples.empty()) throw InvalidInputError("signal has no samples");
    if (!(sample_period_ms > 0.0))
      throw InvalidInputError("sample period must be positive");
    for (double v : samples)
      if (!std::isfinite(v)) throw InvalidInputError("non-finite sample value");
  }
};

}  // namespace ecgkit
