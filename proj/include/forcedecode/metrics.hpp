#pragma once

#include <Eigen/Dense>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "forcedecode/error.hpp"

namespace forcedecode {

// Coefficient of determination, 1 - SSE / SST.
inline double cod(std::span<const double> actual, std::span<const double> predicted) {
  if (actual.empty() || actual.size() != predicted.size()) {
    throw DataError("cod: vectors must be non-empty and of equal length");
  }
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    sse += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    sst += (actual[i] - mean) * (actual[i] - mean);
  }
  if (!(sst > 0.0)) throw DataError("cod: actual values are constant");
  return 1.0 - sse / sst;
}

inline double cod(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
  return cod(std::span(actual.data(), static_cast<std::size_t>(actual.size())),
             std::span(predicted.data(), static_cast<std::size_t>(predicted.size())));
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("pearson: need equal lengths >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DataError("pearson: input is constant");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return pearson(std::span(a.data(), static_cast<std::size_t>(a.size())), std::span(b.data(), static_cast<std::size_t>(b.size())));
}

// Population standard deviation over mean. Multiply by 100 for percent.
inline double coeff_variation(std::span<const double> x) {
  if (x.empty()) throw DataError("coeff_variation: empty input");
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / n);
  if (m == 0.0 || std::abs(m) <= 1e-15 * sd) throw DataError("coeff_variation: mean is zero");
  return sd / m;
}

// ---------------------------------------------------------------------------
// Hypothesis tests
// ---------------------------------------------------------------------------

struct TestResult {
  std::string test;
  double statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double p_value = 1.0;
  double effect_size = 0.0;
};

namespace detail {

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_var(std::span<const double> x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double t_two_sided_p(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

inline double f_upper_p(double f, double df1, double df2) {
  if (!std::isfinite(f)) return 0.0;
  if (f <= 0.0) return 1.0;
  boost::math::fisher_f dist(df1, df2);
  return std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
}

}  // namespace detail

// Cohen's d with pooled sample standard deviation.
inline double cohens_d(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("cohens_d: each group needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double pooled = ((na - 1.0) * detail::sample_var(a) + (nb - 1.0) * detail::sample_var(b)) / (na + nb - 2.0);
  const double diff = detail::mean_of(a) - detail::mean_of(b);
  if (!(pooled > 0.0)) return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  return diff / std::sqrt(pooled);
}

inline TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("welch_t_test: each group needs at least two values");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = detail::sample_var(a) / na, vb = detail::sample_var(b) / nb;
  const double diff = detail::mean_of(a) - detail::mean_of(b);
  TestResult r{"welch_t"};
  r.effect_size = cohens_d(a, b);
  if (!(va + vb > 0.0)) {
    r.statistic = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.df1 = na + nb - 2.0;
    r.p_value = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = diff / std::sqrt(va + vb);
  r.df1 = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = detail::t_two_sided_p(r.statistic, r.df1);
  return r;
}

inline TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("paired_t_test: need paired samples, n >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double m = detail::mean_of(d);
  const double sd = std::sqrt(detail::sample_var(d));
  TestResult r{"paired_t"};
  r.df1 = n - 1.0;
  r.effect_size = sd > 0.0 ? m / sd : 0.0;
  if (!(sd > 0.0)) {
    r.statistic = m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    r.p_value = m == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = m / (sd / std::sqrt(n));
  r.p_value = detail::t_two_sided_p(r.statistic, r.df1);
  return r;
}

// Fixed-effect one-way ANOVA; effect size is eta squared.
inline TestResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw DataError("one_way_anova: need at least two groups");
  double grand = 0.0;
  std::size_t N = 0;
  for (const auto& g : groups) {
    if (g.empty()) throw DataError("one_way_anova: empty group");
    for (double v : g) grand += v;
    N += g.size();
  }
  grand /= static_cast<double>(N);
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = detail::mean_of(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double v : g) ssw += (v - m) * (v - m);
  }
  const double k = static_cast<double>(groups.size());
  TestResult r{"one_way_anova"};
  r.df1 = k - 1.0;
  r.df2 = static_cast<double>(N) - k;
  if (r.df2 < 1.0) throw DataError("one_way_anova: not enough observations");
  r.statistic = ssw > 0.0 ? (ssb / r.df1) / (ssw / r.df2) : (ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  r.p_value = detail::f_upper_p(r.statistic, r.df1, r.df2);
  r.effect_size = ssb + ssw > 0.0 ? ssb / (ssb + ssw) : 0.0;
  return r;
}

// Balanced two-way fixed-effect ANOVA without interaction.
// cells[a][b] holds the replicates for level a of factor A and b of B.
struct TwoWayAnova {
  TestResult factor_a;
  TestResult factor_b;
};

inline TwoWayAnova two_way_anova(const std::vector<std::vector<std::vector<double>>>& cells) {
  const std::size_t A = cells.size();
  if (A < 2) throw DataError("two_way_anova: factor A needs at least two levels");
  const std::size_t B = cells.front().size();
  if (B < 2) throw DataError("two_way_anova: factor B needs at least two levels");
  const std::size_t r = cells.front().front().size();
  for (const auto& row : cells) {
    if (row.size() != B) throw DataError("two_way_anova: unbalanced design; use one_way_anova");
    for (const auto& c : row)
      if (c.size() != r || r == 0) throw DataError("two_way_anova: unbalanced design; use one_way_anova");
  }
  std::vector<double> ma(A, 0.0), mb(B, 0.0);
  double grand = 0.0;
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (double v : cells[a][b]) {
        ma[a] += v;
        mb[b] += v;
        grand += v;
      }
  const double N = static_cast<double>(A * B * r);
  grand /= N;
  for (auto& v : ma) v /= static_cast<double>(B * r);
  for (auto& v : mb) v /= static_cast<double>(A * r);
  double ssa = 0.0, ssb = 0.0, sst = 0.0;
  for (double v : ma) ssa += static_cast<double>(B * r) * (v - grand) * (v - grand);
  for (double v : mb) ssb += static_cast<double>(A * r) * (v - grand) * (v - grand);
  for (const auto& row : cells)
    for (const auto& c : row)
      for (double v : c) sst += (v - grand) * (v - grand);
  const double sse = std::max(0.0, sst - ssa - ssb);
  const double dfa = static_cast<double>(A) - 1.0, dfb = static_cast<double>(B) - 1.0;
  const double dfe = N - 1.0 - dfa - dfb;
  if (dfe < 1.0) throw DataError("two_way_anova: no residual degrees of freedom");
  const double mse = sse / dfe;
  auto make = [&](const char* name, double ss, double df) {
    TestResult t{name};
    t.df1 = df;
    t.df2 = dfe;
    t.statistic = mse > 0.0 ? (ss / df) / mse : (ss > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    t.p_value = detail::f_upper_p(t.statistic, df, dfe);
    t.effect_size = ss + sse > 0.0 ? ss / (ss + sse) : 0.0;  // partial eta squared
    return t;
  };
  return {make("two_way_anova_a", ssa, dfa), make("two_way_anova_b", ssb, dfb)};
}

}  // namespace forcedecode
