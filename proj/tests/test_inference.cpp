#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "gammkit/inference.hpp"
#include "gammkit/simulate.hpp"

using namespace gammkit;

namespace {

DataTable noise_table(std::uint64_t seed, int n, double signal) {
  auto rng = make_stream(seed, Stream::Noise);
  boost::random::normal_distribution<double> nd;
  boost::random::uniform_real_distribution<double> u;
  std::vector<double> x(static_cast<std::size_t>(n)), z(x.size()), w(x.size()), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    z[i] = u(rng);
    w[i] = u(rng);
    y[i] = std::sin(2.0 * std::numbers::pi * x[i]) + signal * z[i] + 0.5 * nd(rng);
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("z", z);
  t.set_numeric("w", w);
  t.set_numeric("y", y);
  return t;
}

double ols_rss(const MatrixXd& X, const VectorXd& y) {
  VectorXd b = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  return (y - X * b).squaredNorm();
}

}  // namespace

TEST(FStatistic, SummaryArithmetic) {
  EXPECT_NEAR(15.4248 - 9.6448, 5.78, 1e-12);
  EXPECT_NEAR(f_statistic(1.1664, 5.78, 0.03357), 6.01, 0.005);
  EXPECT_THROW(f_statistic(1.0, 0.0, 1.0), Error);
}

TEST(NestedFTest, UnpenalizedModelsMatchClassicalF) {
  auto t = noise_table(3, 80, 0.4);
  auto small = fit(t, parse_model_spec("response: y\nparametric: x\n"));
  auto big = fit(t, parse_model_spec("response: y\nparametric: x\nparametric: z\nparametric: w\n"));
  const Index n = 80;
  MatrixXd X0(n, 2), X1(n, 4);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    X0.row(i) << 1.0, t.values("x")[r];
    X1.row(i) << 1.0, t.values("x")[r], t.values("z")[r], t.values("w")[r];
    y(i) = t.values("y")[r];
  }
  const double r0 = ols_rss(X0, y), r1 = ols_rss(X1, y);
  const double F = ((r0 - r1) / 2.0) / (r1 / static_cast<double>(n - 4));
  auto f = nested_f_test(small, big);
  EXPECT_NEAR(f.F, F, 1e-8 * F);
  EXPECT_NEAR(f.df1, 2.0, 1e-8);
  EXPECT_NEAR(f.df2, 76.0, 1e-8);
  EXPECT_GT(f.p, 0.0);
  EXPECT_LT(f.p, 1.0);
}

TEST(NestedFTest, IdenticalModelsAndSwappedArguments) {
  auto t = noise_table(4, 100, 0.0);
  auto spec = parse_model_spec("response: y\nsmooth: tp(x) k=10\n");
  auto a = fit(t, spec);
  auto b = fit(t, spec);
  auto same = nested_f_test(a, b);
  EXPECT_EQ(same.F, 0.0);
  EXPECT_EQ(same.p, 1.0);

  auto big = fit(t, parse_model_spec("response: y\nsmooth: tp(x) k=10\nparametric: z\nparametric: w\n"));
  EXPECT_NO_THROW(nested_f_test(a, big));
  try {
    nested_f_test(big, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Nesting);
  }
}

TEST(NestedFTest, DifferentResponsesAreRejected) {
  auto t = noise_table(5, 60, 0.0);
  auto u = noise_table(6, 60, 0.0);
  auto a = fit(t, parse_model_spec("response: y\n"));
  auto b = fit(u, parse_model_spec("response: y\nparametric: x\n"));
  EXPECT_THROW(nested_f_test(a, b), Error);
}

TEST(Aic, InterceptOnlyHandFormula) {
  auto t = noise_table(7, 100, 0.0);
  auto m = fit(t, parse_model_spec("response: y\n"));
  const auto& y = t.values("y");
  double mean = 0.0;
  for (double v : y) mean += v / 100.0;
  double rss = 0.0;
  for (double v : y) rss += (v - mean) * (v - mean);
  const double s2 = rss / 100.0;
  EXPECT_NEAR(aic(m), 100.0 * std::log(2.0 * std::numbers::pi * s2) + 100.0 + 4.0, 1e-9);
}

TEST(Aic, LocationInvariantDifferencesAndBetterFitWins) {
  auto t = noise_table(8, 120, 1.0);
  auto s0 = parse_model_spec("response: y\nparametric: x\n");
  auto s1 = parse_model_spec("response: y\nparametric: z\n");
  const double d = aic(fit(t, s0)) - aic(fit(t, s1));
  auto y = t.values("y");
  for (double& v : y) v += 123.0;
  DataTable shifted = t;
  shifted.set_numeric("y", y);
  EXPECT_NEAR(aic(fit(shifted, s0)) - aic(fit(shifted, s1)), d, 1e-8);

  // Same edf, smaller residual sum of squares.
  auto mx = fit(t, s0), mz = fit(t, s1);
  ASSERT_NEAR(mx.total_edf, mz.total_edf, 1e-12);
  EXPECT_EQ(mx.rss < mz.rss, aic(mx) < aic(mz));
}

TEST(TermEdf, SumsToTotalAndParametricIsExact) {
  auto t = noise_table(9, 150, 1.0);
  auto m = fit(t, parse_model_spec("response: y\nparametric: z\nsmooth: tp(x) k=10\nsmooth: cr(w) k=8\n"));
  double sum = 0.0;
  for (const auto& label : m.spec.term_labels()) sum += term_edf(m, label);
  EXPECT_NEAR(sum, m.total_edf, 1e-10);
  EXPECT_NEAR(term_edf(m, "(Intercept)"), 1.0, 1e-10);
  EXPECT_NEAR(term_edf(m, "z"), 1.0, 1e-10);
  EXPECT_THROW(term_edf(m, "s(q)"), Error);
}

TEST(CompareReml, StoredScoreArithmetic) {
  auto c = compare_reml(-12495.77, 27, -13422.25, 34);
  EXPECT_NEAR(c.stat, 926.48, 1e-9);
  EXPECT_EQ(c.df, 7.0);
  ASSERT_TRUE(c.p.has_value());
  EXPECT_LT(*c.p, 1e-4);
  EXPECT_FALSE(c.simpler_and_better);
  EXPECT_EQ(c.preferred, 1);

  auto d = compare_reml(-13027.88, 10, -14911.48, 14);
  EXPECT_NEAR(d.stat, 1883.6, 1e-9);
  EXPECT_EQ(d.df, 4.0);

  auto swapped = compare_reml(-13422.25, 34, -12495.77, 27);
  EXPECT_EQ(swapped.stat, c.stat);
  EXPECT_EQ(swapped.df, c.df);
  EXPECT_EQ(*swapped.p, *c.p);
}

TEST(CompareReml, SimplerAndBetterHasNoTest) {
  auto c = compare_reml(-100.0, 5, -90.0, 8);
  EXPECT_TRUE(c.simpler_and_better);
  EXPECT_FALSE(c.p.has_value());
  EXPECT_EQ(c.preferred, 0);
}

TEST(CompareReml, FittedModels) {
  auto t = noise_table(10, 200, 2.0);
  auto m0 = fit(t, parse_model_spec("response: y\nsmooth: tp(x) k=10\n"));
  auto m1 = fit(t, parse_model_spec("response: y\nparametric: z\nsmooth: tp(x) k=10\n"));
  EXPECT_EQ(comparison_df(m0), 2);  // intercept, one lambda
  EXPECT_EQ(comparison_df(m1), 3);
  auto c = compare_reml(m0, m1);
  EXPECT_NEAR(c.stat, std::abs(m0.reml - m1.reml), 1e-12);
  EXPECT_EQ(c.df, 1.0);
  try {
    compare_reml(m0, fit(t, m0.spec));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Comparison);
  }
}

TEST(WaldTermTest, OneColumnParametricIsSquaredT) {
  auto t = noise_table(11, 90, 0.8);
  auto m = fit(t, parse_model_spec("response: y\nparametric: z\nsmooth: tp(x) k=8\n"));
  auto w = wald_term_test(m, "z");
  const auto& term = m.design->term("z");
  const double tval = m.beta(term.start) / std::sqrt(m.Vb(term.start, term.start));
  EXPECT_NEAR(w.statistic, tval * tval, 1e-9 * tval * tval);
  EXPECT_FALSE(w.approximate);
  EXPECT_EQ(w.kind, SummaryKind::Parametric);
}

TEST(WaldTermTest, StrongEffectIsSignificant) {
  auto t = noise_table(12, 200, 0.0);
  auto m = fit(t, parse_model_spec("response: y\nsmooth: tp(x) k=10\n"));
  auto w = wald_term_test(m, "s(x)");
  EXPECT_TRUE(w.approximate);
  EXPECT_LT(w.p, 0.001);
  EXPECT_GE(w.ref_df, 1.0);
}

TEST(WaldTermTest, ZeroEdfTermReportsPOne) {
  DataTable t;
  std::vector<double> y;
  std::vector<std::string> g;
  for (int i = 0; i < 40; ++i) {
    y.push_back(std::sin(i * 1.3));
    g.push_back("g" + std::to_string(i % 4));
  }
  t.set_numeric("y", y);
  t.set_factor("g", g);
  FitOptions o;
  o.lambdas = std::vector<double>{1e15};
  auto m = fit(t, parse_model_spec("response: y\nrandom: intercept(g)\n"), o);
  auto w = wald_term_test(m, "re(g)");
  EXPECT_EQ(w.edf, 0.0);
  EXPECT_EQ(w.p, 1.0);
  EXPECT_EQ(w.kind, SummaryKind::Random);
}

TEST(WaldTermTest, PureNoiseSmoothCalibration) {
  int rejections = 0;
  for (std::uint64_t rep = 0; rep < 500; ++rep) {
    auto rng = make_stream(20000 + rep, Stream::Noise);
    boost::random::normal_distribution<double> nd;
    boost::random::uniform_real_distribution<double> u;
    std::vector<double> x(200), y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      x[i] = u(rng);
      y[i] = nd(rng);
    }
    DataTable t;
    t.set_numeric("x", x);
    t.set_numeric("y", y);
    auto m = fit(t, parse_model_spec("response: y\nsmooth: tp(x) k=10\n"));
    if (wald_term_test(m, "s(x)").p < 0.05) ++rejections;
  }
  EXPECT_GE(rejections, 10);
  EXPECT_LE(rejections, 50);
}

TEST(Summary, RowsAndTValues) {
  auto t = noise_table(13, 120, 1.0);
  auto m = fit(t, parse_model_spec("response: y\nparametric: z\nsmooth: tp(x) k=10\n"));
  auto s = summarize(m);
  ASSERT_EQ(s.parametric.size(), 2u);
  ASSERT_EQ(s.smooth.size(), 1u);
  EXPECT_EQ(s.parametric[0].name, "(Intercept)");
  for (const auto& r : s.parametric) EXPECT_NEAR(r.t, r.estimate / r.se, 1e-12);
  EXPECT_EQ(s.smooth[0].term, "s(x)");
  EXPECT_GT(s.r_squared, 0.5);
  EXPECT_NEAR(s.aic, aic(m), 1e-12);
}
