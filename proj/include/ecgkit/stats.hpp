#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/special.hpp"
#include "ecgkit/spectral.hpp"

namespace ecgkit {

enum class TestMethod { KS, MWU, T, LEVENE, PEARSON };

inline const char* test_method_name(TestMethod m) {
  switch (m) {
    case TestMethod::KS: return "KS";
    case TestMethod::MWU: return "MWU";
    case TestMethod::T: return "T";
    case TestMethod::LEVENE: return "LEVENE";
    case TestMethod::PEARSON: return "PEARSON";
  }
  return "?";
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::T;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;
  double ci_low = -1.0;
  double ci_high = 1.0;
  std::size_t n = 0;
};

namespace stats_detail {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (static_cast<double>(v.size()) - 1.0);
}

// Midranks of the pooled sample (average ranks on ties), 1-based.
inline std::vector<double> midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace stats_detail

// Pearson correlation with two-sided p (t distribution, n-2 dof) and 95%
// confidence interval via the Fisher z transform, z +- 1.96/sqrt(n-3).
inline PearsonResult pearson_with_ci(const std::vector<double>& a,
                                     const std::vector<double>& b) {
  if (a.size() != b.size()) throw InvalidInputError("samples must have equal length");
  const std::size_t n = a.size();
  if (n < 3) throw InvalidInputError("pearson needs at least 3 pairs");

  const double ma = stats_detail::mean_of(a);
  const double mb = stats_detail::mean_of(b);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (a[i] - ma) * (b[i] - mb);
    sxx += (a[i] - ma) * (a[i] - ma);
    syy += (b[i] - mb) * (b[i] - mb);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw UndefinedCorrelationError("zero variance sample");

  PearsonResult res;
  res.n = n;
  res.r = sxy / std::sqrt(sxx * syy);
  if (res.r > 1.0) res.r = 1.0;
  if (res.r < -1.0) res.r = -1.0;

  const double nu = static_cast<double>(n) - 2.0;
  if (1.0 - res.r * res.r < 1e-15) {
    // Perfect linear relation: degenerate interval at r.
    res.p_value = 0.0;
    res.ci_low = res.r;
    res.ci_high = res.r;
    return res;
  }
  const double t = res.r * std::sqrt(nu / (1.0 - res.r * res.r));
  res.p_value = special::t_two_sided_p(t, nu);
  if (n > 3) {
    const double z = std::atanh(res.r);
    const double half = 1.96 / std::sqrt(static_cast<double>(n) - 3.0);
    res.ci_low = std::tanh(z - half);
    res.ci_high = std::tanh(z + half);
  }
  return res;
}

// Null distribution of the Lilliefors statistic for sample size n,
// simulated once and shared across tests of the same size.
struct LillieforsTable {
  std::size_t n = 0;
  std::vector<double> sorted_stats;

  double p_value(double d) const {
    const auto it = std::lower_bound(sorted_stats.begin(), sorted_stats.end(), d);
    const std::size_t at_least = sorted_stats.size() -
                                 static_cast<std::size_t>(it - sorted_stats.begin());
    return (1.0 + static_cast<double>(at_least)) /
           (1.0 + static_cast<double>(sorted_stats.size()));
  }
};

namespace stats_detail {

// sup |F_emp - Phi((x - mean)/sd)| with parameters estimated from the sample.
inline double lilliefors_statistic(std::vector<double> x) {
  const std::size_t n = x.size();
  const double mean = mean_of(x);
  const double sd = std::sqrt(sample_variance(x, mean));
  if (!(sd > 0.0)) return 1.0;
  std::sort(x.begin(), x.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = special::normal_cdf((x[i] - mean) / sd);
    const double upper = (static_cast<double>(i) + 1.0) / static_cast<double>(n) - phi;
    const double lower = phi - static_cast<double>(i) / static_cast<double>(n);
    d = std::max(d, std::max(upper, lower));
  }
  return d;
}

}  // namespace stats_detail

inline LillieforsTable make_lilliefors_table(std::size_t n, std::size_t reps = 10000,
                                             std::uint64_t seed = 0x4c494c4945ull) {
  if (n < 4) throw InsufficientSampleError("normality test needs n >= 4");
  LillieforsTable table;
  table.n = n;
  table.sorted_stats.resize(reps);
  Rng rng(seed);
  std::vector<double> sample(n);
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < n; ++i) sample[i] = rng.normal();
    table.sorted_stats[r] = stats_detail::lilliefors_statistic(sample);
  }
  std::sort(table.sorted_stats.begin(), table.sorted_stats.end());
  return table;
}

// Kolmogorov-Smirnov normality test with estimated mean/sd (Lilliefors).
// The p-value is calibrated by Monte Carlo against `table`, or against a
// freshly simulated table when none is supplied. A constant sample is
// reported as a hard rejection with D = 1.
inline TestResult ks_normality(const std::vector<double>& sample,
                               const LillieforsTable* table = nullptr,
                               std::size_t reps = 10000,
                               std::uint64_t seed = 0x4c494c4945ull) {
  if (sample.size() < 4) throw InsufficientSampleError("normality test needs n >= 4");
  TestResult res;
  res.method = TestMethod::KS;
  res.n1 = sample.size();
  res.n2 = 0;

  const double mean = stats_detail::mean_of(sample);
  const double sd = std::sqrt(stats_detail::sample_variance(sample, mean));
  if (!(sd > 0.0)) {
    res.statistic = 1.0;
    res.p_value = 0.0;
    return res;
  }

  res.statistic = stats_detail::lilliefors_statistic(sample);
  if (table != nullptr) {
    if (table->n != sample.size())
      throw InvalidInputError("lilliefors table size mismatch");
    res.p_value = table->p_value(res.statistic);
  } else {
    const LillieforsTable own = make_lilliefors_table(sample.size(), reps, seed);
    res.p_value = own.p_value(res.statistic);
  }
  return res;
}

// Wilcoxon-Mann-Whitney test. The reported statistic is W, the rank sum
// of the first sample. Exact two-sided p by full enumeration of group
// assignments when n1+n2 <= 12; otherwise normal approximation with tie
// and continuity corrections.
inline TestResult mann_whitney_u(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw InvalidInputError("empty sample");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  const std::size_t n = n1 + n2;

  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = stats_detail::midranks(pooled);

  double w = 0.0;
  for (std::size_t i = 0; i < n1; ++i) w += ranks[i];
  const double u = w - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  const double mu = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;

  TestResult res;
  res.method = TestMethod::MWU;
  res.n1 = n1;
  res.n2 = n2;
  res.statistic = w;

  if (n <= 12) {
    // Enumerate all C(n, n1) assignments of the pooled ranks to group one.
    std::vector<std::size_t> pick(n1);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::size_t total = 0;
    std::size_t extreme = 0;
    const double obs_dev = std::abs(u - mu);
    while (true) {
      double w_sub = 0.0;
      for (std::size_t i : pick) w_sub += ranks[i];
      const double u_sub = w_sub - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
      if (std::abs(u_sub - mu) >= obs_dev - 1e-12) ++extreme;
      ++total;
      // Next combination in lexicographic order.
      std::size_t i = n1;
      while (i > 0 && pick[i - 1] == n - n1 + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < n1; ++j) pick[j] = pick[j - 1] + 1;
    }
    res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    return res;
  }

  // Tie-corrected variance.
  std::map<double, std::size_t> tie_counts;
  for (double v : pooled) ++tie_counts[v];
  double tie_sum = 0.0;
  for (const auto& [value, count] : tie_counts) {
    const double t = static_cast<double>(count);
    tie_sum += t * t * t - t;
  }
  const double nn = static_cast<double>(n);
  const double var = mu / 6.0 * ((nn + 1.0) - tie_sum / (nn * (nn - 1.0)));
  if (!(var > 0.0)) {
    res.p_value = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

enum class TVariant { Student, Welch };

// Two-sided two-sample t test. Student pools variances; Welch uses the
// Welch-Satterthwaite degrees of freedom.
inline TestResult t_test(const std::vector<double>& a, const std::vector<double>& b,
                         TVariant variant = TVariant::Student) {
  if (a.size() < 2 || b.size() < 2) throw InvalidInputError("t test needs n >= 2 per sample");
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double m1 = stats_detail::mean_of(a);
  const double m2 = stats_detail::mean_of(b);
  const double v1 = stats_detail::sample_variance(a, m1);
  const double v2 = stats_detail::sample_variance(b, m2);

  TestResult res;
  res.method = TestMethod::T;
  res.n1 = a.size();
  res.n2 = b.size();

  double se = 0.0;
  double nu = 0.0;
  if (variant == TVariant::Student) {
    const double pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0);
    se = std::sqrt(pooled * (1.0 / n1 + 1.0 / n2));
    nu = n1 + n2 - 2.0;
  } else {
    se = std::sqrt(v1 / n1 + v2 / n2);
    const double q1 = v1 / n1;
    const double q2 = v2 / n2;
    nu = (q1 + q2) * (q1 + q2) /
         (q1 * q1 / (n1 - 1.0) + q2 * q2 / (n2 - 1.0));
  }

  if (se == 0.0) {
    // Degenerate: both samples constant.
    res.statistic = 0.0;
    res.p_value = (m1 == m2) ? 1.0 : 0.0;
    if (m1 != m2) res.statistic = std::numeric_limits<double>::infinity();
    return res;
  }
  res.statistic = (m1 - m2) / se;
  res.p_value = special::t_two_sided_p(res.statistic, nu);
  return res;
}

// Levene's test for equality of variances, classic mean-centered variant
// with k = 2 groups; p from F(1, n1+n2-2).
inline TestResult levene(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw InvalidInputError("levene needs n >= 2 per sample");
  const double m1 = stats_detail::mean_of(a);
  const double m2 = stats_detail::mean_of(b);

  std::vector<double> z1(a.size()), z2(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) z1[i] = std::abs(a[i] - m1);
  for (std::size_t i = 0; i < b.size(); ++i) z2[i] = std::abs(b[i] - m2);

  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double nn = n1 + n2;
  const double zm1 = stats_detail::mean_of(z1);
  const double zm2 = stats_detail::mean_of(z2);
  const double zm = (n1 * zm1 + n2 * zm2) / nn;

  const double between = n1 * (zm1 - zm) * (zm1 - zm) + n2 * (zm2 - zm) * (zm2 - zm);
  double within = 0.0;
  for (double z : z1) within += (z - zm1) * (z - zm1);
  for (double z : z2) within += (z - zm2) * (z - zm2);

  TestResult res;
  res.method = TestMethod::LEVENE;
  res.n1 = a.size();
  res.n2 = b.size();
  if (within == 0.0) {
    if (between == 0.0) {
      res.statistic = 0.0;
      res.p_value = 1.0;
    } else {
      res.statistic = std::numeric_limits<double>::infinity();
      res.p_value = 0.0;
    }
    return res;
  }
  res.statistic = (nn - 2.0) / 1.0 * between / within;
  res.p_value = special::f_upper_p(res.statistic, 1.0, nn - 2.0);
  return res;
}

// One row of the cohort comparison output.
struct ComparisonRow {
  double frequency_hz = 0.0;
  double mean_n = 0.0;
  double sd_n = 0.0;
  double mean_a = 0.0;
  double sd_a = 0.0;
  TestMethod chosen_test = TestMethod::MWU;
  bool welch = false;  // set when chosen_test == T and Levene rejected
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// Per-frequency cohort comparison. Normality of both cohorts gates the
// choice between the t test (Student, or Welch when Levene rejects equal
// variances) and the Mann-Whitney test.
inline std::vector<ComparisonRow> compare_cohorts(const SpectrumTable& normal,
                                                  const SpectrumTable& abnormal,
                                                  double alpha = 0.05,
                                                  std::uint64_t ks_seed = 0x4c494c4945ull) {
  if (normal.frequencies_hz.size() != abnormal.frequencies_hz.size())
    throw GridMismatchError("cohort frequency grids differ in size");
  for (std::size_t i = 0; i < normal.frequencies_hz.size(); ++i)
    if (std::abs(normal.frequencies_hz[i] - abnormal.frequencies_hz[i]) > 1e-9)
      throw GridMismatchError("cohort frequency grids differ");
  if (normal.rows.empty() || abnormal.rows.empty())
    throw InvalidInputError("empty cohort");

  const LillieforsTable table_n = make_lilliefors_table(normal.rows.size(), 10000, ks_seed);
  const LillieforsTable table_a =
      abnormal.rows.size() == normal.rows.size()
          ? table_n
          : make_lilliefors_table(abnormal.rows.size(), 10000, ks_seed);

  std::vector<ComparisonRow> out;
  out.reserve(normal.frequencies_hz.size());
  std::vector<double> xs(normal.rows.size()), ys(abnormal.rows.size());
  for (std::size_t b = 0; b < normal.frequencies_hz.size(); ++b) {
    for (std::size_t i = 0; i < normal.rows.size(); ++i) xs[i] = normal.rows[i][b];
    for (std::size_t i = 0; i < abnormal.rows.size(); ++i) ys[i] = abnormal.rows[i][b];

    ComparisonRow row;
    row.frequency_hz = normal.frequencies_hz[b];
    row.mean_n = stats_detail::mean_of(xs);
    row.sd_n = std::sqrt(stats_detail::sample_variance(xs, row.mean_n));
    row.mean_a = stats_detail::mean_of(ys);
    row.sd_a = std::sqrt(stats_detail::sample_variance(ys, row.mean_a));

    const TestResult ks_n = ks_normality(xs, &table_n);
    const TestResult ks_a = ks_normality(ys, &table_a);
    TestResult cmp;
    if (ks_n.p_value >= alpha && ks_a.p_value >= alpha) {
      const TestResult lev = levene(xs, ys);
      const TVariant variant =
          lev.p_value >= alpha ? TVariant::Student : TVariant::Welch;
      cmp = t_test(xs, ys, variant);
      row.welch = (variant == TVariant::Welch);
    } else {
      cmp = mann_whitney_u(xs, ys);
    }
    row.chosen_test = cmp.method;
    row.statistic = cmp.statistic;
    row.p_value = cmp.p_value;
    row.significant = cmp.p_value < alpha;
    out.push_back(row);
  }
  return out;
}

}  // namespace ecgkit
