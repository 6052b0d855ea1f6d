#include <gtest/gtest.h>

#include "forcedecode/metrics.hpp"
#include "forcedecode/random.hpp"

using namespace forcedecode;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double mean = 0.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = mean + rng.normal();
  return x;
}

}  // namespace

TEST(Cod, Identities) {
  const std::vector<double> y{0.3, 1.2, -0.7, 2.5, 0.0};
  EXPECT_EQ(cod(y, y), 1.0);
  double m = 0.0;
  for (double v : y) m += v;
  m /= 5.0;
  EXPECT_NEAR(cod(y, std::vector<double>(5, m)), 0.0, 1e-15);
  EXPECT_EQ(cod(std::vector<double>{0, 1, 2}, std::vector<double>{0, 0, 0}), -1.5);
}

TEST(Cod, Errors) {
  EXPECT_THROW(cod(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(cod(std::vector<double>{1, 2}, std::vector<double>{1}), DataError);
  EXPECT_THROW(cod(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(CodProperty, OneMinusMseOverPopulationVariance) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + rng.index(300);
    const auto y = normals(n, 100 + static_cast<std::uint64_t>(k), 3.0);
    const auto p = normals(n, 900 + static_cast<std::uint64_t>(k));
    double my = 0.0;
    for (double v : y) my += v;
    my /= static_cast<double>(n);
    double mse = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mse += (y[i] - p[i]) * (y[i] - p[i]);
      var += (y[i] - my) * (y[i] - my);
    }
    mse /= static_cast<double>(n);
    var /= static_cast<double>(n);
    const double c = cod(y, p);
    EXPECT_NEAR(c, 1.0 - mse / var, 1e-12 * std::max(1.0, std::abs(c)));
    EXPECT_LE(c, 1.0);
  }
}

TEST(Pearson, Examples) {
  const auto a = normals(100, 2);
  std::vector<double> b(a.size()), c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    b[i] = 2.0 * a[i] + 1.0;
    c[i] = -a[i];
  }
  EXPECT_NEAR(pearson(a, b), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, c), -1.0, 1e-12);
  EXPECT_LE(std::abs(pearson(normals(10000, 3), normals(10000, 4))), 0.05);
  EXPECT_THROW(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), DataError);
}

TEST(PearsonProperty, PositiveAffineInvariance) {
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    const auto a = normals(50, 10 + static_cast<std::uint64_t>(k));
    const auto b = normals(50, 500 + static_cast<std::uint64_t>(k));
    const double s = rng.uniform(0.1, 10.0), o = rng.uniform(-5.0, 5.0);
    std::vector<double> a2(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) a2[i] = s * a[i] + o;
    const double r = pearson(a, b);
    EXPECT_NEAR(pearson(a2, b), r, 1e-12);
    EXPECT_NEAR(pearson(b, a2), r, 1e-12);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(CoeffVariation, Examples) {
  EXPECT_EQ(coeff_variation(std::vector<double>(7, 4.2)), 0.0);
  EXPECT_DOUBLE_EQ(coeff_variation(std::vector<double>{1.0, 3.0}), 0.5);
  EXPECT_THROW(coeff_variation(std::vector<double>{-1.0, 1.0}), DataError);
  EXPECT_THROW(coeff_variation(std::vector<double>{}), DataError);
}

TEST(Stats, IdenticalGroups) {
  const std::vector<double> a{1.0, 2.0, 4.0, 3.5};
  const auto w = welch_t_test(a, a);
  EXPECT_EQ(w.statistic, 0.0);
  EXPECT_NEAR(w.p_value, 1.0, 1e-12);
  EXPECT_EQ(cohens_d(a, a), 0.0);
  const auto p = paired_t_test(a, a);
  EXPECT_EQ(p.statistic, 0.0);
  EXPECT_EQ(p.p_value, 1.0);
}

TEST(Stats, KnownShiftIsDetected) {
  const auto a = normals(50, 7);
  const auto b = normals(50, 8, 5.0);
  const auto w = welch_t_test(b, a);
  EXPECT_LT(w.p_value, 1e-10);
  EXPECT_NEAR(cohens_d(b, a), 5.0, 0.8);
  EXPECT_NEAR(w.effect_size, cohens_d(b, a), 1e-15);
}

TEST(Stats, PairedTHandValue) {
  // differences 1..5: mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt(5)) = sqrt(18)
  const std::vector<double> a{2, 4, 6, 8, 10}, b{1, 2, 3, 4, 5};
  const auto r = paired_t_test(a, b);
  EXPECT_NEAR(r.statistic, std::sqrt(18.0), 1e-12);
  EXPECT_EQ(r.df1, 4.0);
  EXPECT_NEAR(r.p_value, 0.01324, 5e-5);
}

TEST(Stats, OneWayAnovaTwoGroupsIsTSquared) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto a = normals(12, seed);
    const auto b = normals(17, seed + 50, 0.4);
    // pooled-variance t by hand
    auto mean = [](const std::vector<double>& x) {
      double s = 0.0;
      for (double v : x) s += v;
      return s / static_cast<double>(x.size());
    };
    const double ma = mean(a), mb = mean(b);
    double ssa = 0.0, ssb = 0.0;
    for (double v : a) ssa += (v - ma) * (v - ma);
    for (double v : b) ssb += (v - mb) * (v - mb);
    const double sp2 = (ssa + ssb) / static_cast<double>(a.size() + b.size() - 2);
    const double t = (ma - mb) / std::sqrt(sp2 * (1.0 / 12.0 + 1.0 / 17.0));
    const auto f = one_way_anova({a, b});
    EXPECT_NEAR(f.statistic, t * t, 1e-8 * std::max(1.0, t * t));
    EXPECT_EQ(f.df1, 1.0);
    EXPECT_EQ(f.df2, 27.0);
    EXPECT_GE(f.p_value, 0.0);
    EXPECT_LE(f.p_value, 1.0);
  }
}

TEST(Stats, TwoWayAnova) {
  // factor A shifts by 3, factor B has no effect
  std::vector<std::vector<std::vector<double>>> cells(3, std::vector<std::vector<double>>(4));
  Rng rng(9);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      for (int r = 0; r < 5; ++r) cells[a][b].push_back(3.0 * static_cast<double>(a) + rng.normal());
  const auto res = two_way_anova(cells);
  EXPECT_LT(res.factor_a.p_value, 1e-10);
  EXPECT_GT(res.factor_b.p_value, 0.01);
  EXPECT_EQ(res.factor_a.df1, 2.0);
  EXPECT_EQ(res.factor_b.df1, 3.0);
  EXPECT_EQ(res.factor_a.df2, 60.0 - 1.0 - 2.0 - 3.0);
  cells[0][0].pop_back();
  EXPECT_THROW(two_way_anova(cells), DataError);
}

TEST(Stats, InputErrors) {
  EXPECT_THROW(welch_t_test(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), DataError);
  EXPECT_THROW(paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), DataError);
  EXPECT_THROW(one_way_anova({{1.0, 2.0}}), DataError);
}
