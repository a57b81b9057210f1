#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/special.hpp"

namespace ecgkit {

// Beat-level classifier characteristics plus the disease prior.
struct DiagnosticProfile {
  double sensitivity = 0.988;
  double specificity = 0.9825;
  double prior = 0.001;

  void validate() const {
    if (!(sensitivity >= 0.0 && sensitivity <= 1.0))
      throw InvalidInputError("sensitivity outside [0,1]");
    if (!(specificity >= 0.0 && specificity <= 1.0))
      throw InvalidInputError("specificity outside [0,1]");
    if (!(prior > 0.0 && prior < 1.0))
      throw InvalidInputError("prior must lie strictly inside (0,1)");
  }
};

struct BeatTally {
  std::size_t n = 0;  // beats examined
  std::size_t x = 0;  // beats classified abnormal

  void validate() const {
    if (x > n) throw InvalidInputError("abnormal count exceeds beat count");
  }
};

enum class Hypothesis { Diseased, Healthy };

namespace bayes_detail {

// k * log(p) with the empty-product convention 0 * log(0) = 0.
inline double xlogy(double k, double p) {
  if (k == 0.0) return 0.0;
  return k * std::log(p);
}

// Log binomial pmf without the binomial coefficient.
inline double log_kernel(const BeatTally& t, double success_p) {
  return xlogy(static_cast<double>(t.x), success_p) +
         xlogy(static_cast<double>(t.n - t.x), 1.0 - success_p);
}

}  // namespace bayes_detail

// Binomial likelihood of observing the tally under a hypothesis:
// x ~ B(n, sens) if diseased, x ~ B(n, 1 - spec) if healthy.
// Evaluated in log space and exponentiated at the end.
inline double likelihood(const BeatTally& tally, const DiagnosticProfile& profile,
                         Hypothesis h) {
  tally.validate();
  profile.validate();
  if (tally.n == 0) return 1.0;
  const double success =
      h == Hypothesis::Diseased ? profile.sensitivity : 1.0 - profile.specificity;
  const double log_pmf = special::log_binomial(static_cast<long long>(tally.n),
                                               static_cast<long long>(tally.x)) +
                         bayes_detail::log_kernel(tally, success);
  return std::exp(log_pmf);
}

// Posterior probability of disease given the tally. The binomial
// coefficients cancel; the two weighted likelihoods are combined in log
// space so that large n with extreme profiles cannot underflow.
inline double posterior_arvc(const BeatTally& tally, const DiagnosticProfile& profile) {
  tally.validate();
  profile.validate();
  if (tally.n == 0) return profile.prior;  // no evidence

  const double log_num = std::log(profile.prior) +
                         bayes_detail::log_kernel(tally, profile.sensitivity);
  const double log_alt = std::log1p(-profile.prior) +
                         bayes_detail::log_kernel(tally, 1.0 - profile.specificity);

  const bool num_zero = std::isinf(log_num);
  const bool alt_zero = std::isinf(log_alt);
  if (num_zero && alt_zero)
    throw DegenerateProfileError("tally impossible under both hypotheses");
  if (num_zero) return 0.0;
  if (alt_zero) return 1.0;

  // posterior = 1 / (1 + exp(log_alt - log_num))
  const double delta = log_alt - log_num;
  if (delta > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(delta));
}

// Posterior for every x = 0..n at fixed n. Monotone non-decreasing in x
// whenever sens > 1 - spec.
inline std::vector<std::pair<std::size_t, double>> posterior_curve(
    std::size_t n, const DiagnosticProfile& profile) {
  if (n < 1) throw InvalidInputError("curve needs n >= 1");
  std::vector<std::pair<std::size_t, double>> curve;
  curve.reserve(n + 1);
  for (std::size_t x = 0; x <= n; ++x)
    curve.emplace_back(x, posterior_arvc({n, x}, profile));
  return curve;
}

}  // namespace ecgkit
