#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gammkit/fit.hpp"
#include "gammkit/simulate.hpp"

using namespace gammkit;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorKind::Io;
}

DataTable sine_data(int n, double sd, std::uint64_t seed, std::vector<double>* truth = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> e(0.0, sd);
  std::vector<double> x(static_cast<std::size_t>(n)), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    const double f = std::sin(2.0 * M_PI * x[i]);
    if (truth) truth->push_back(f);
    y[i] = f + e(rng);
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  return t;
}

DataTable balanced_groups(int groups, int per, double sb, double s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> y;
  std::vector<std::string> g;
  for (int j = 0; j < groups; ++j) {
    const double b = sb * nd(rng);
    for (int i = 0; i < per; ++i) {
      y.push_back(3.0 + b + s * nd(rng));
      g.push_back("g" + std::to_string(j));
    }
  }
  DataTable t;
  t.set_numeric("y", y);
  t.set_factor("g", g);
  return t;
}

ModelSpec spec_of(const std::string& text) { return parse_model_spec(text); }

// Dense penalty over all coefficients.
MatrixXd full_penalty(const AssembledDesign& d, const VectorXd& lambda) {
  MatrixXd S = MatrixXd::Zero(d.p(), d.p());
  for (std::size_t j = 0; j < d.penalties.size(); ++j) {
    const auto& t = d.terms[d.penalties[j].term];
    S.block(t.start, t.start, t.size, t.size) += lambda(static_cast<Index>(j)) * d.penalties[j].S;
  }
  return S;
}

}  // namespace

TEST(ModelSpecParser, ParsesAllTermKinds) {
  auto s = spec_of(R"(# comment
response: logRT
parametric: size*orientation coding=sum
smooth: tp(soa) k=10
smooth: fs(trial, subject) k=5
smooth: te(freq, trial) k=5,6
smooth: ti(freq) k=5
smooth: cr(x) k=8 by=cond
random: intercept(word)
random: slope(subject, duration)
rho: 0.2
series: subject order: trial
)");
  EXPECT_EQ(s.response, "logRT");
  ASSERT_EQ(s.parametric_terms.size(), 3u);
  EXPECT_EQ(s.parametric_terms[2].label(), "size:orientation");
  EXPECT_EQ(s.parametric_terms[0].coding, Coding::Sum);
  EXPECT_DOUBLE_EQ(s.rho, 0.2);
  EXPECT_EQ(*s.series_key, "subject");
  EXPECT_EQ(*s.order_key, "trial");
  auto labels = s.term_labels();
  EXPECT_EQ(labels, (std::vector<std::string>{"(Intercept)", "size", "orientation", "size:orientation", "s(soa)",
                                              "fs(trial,subject)", "te(freq,trial)", "ti(freq)", "s(x)", "re(word)",
                                              "re(subject,duration)"}));
  EXPECT_EQ(s.smooth_terms[2].k_at(1), 6);
  EXPECT_EQ(s.smooth_terms[1].k_at(0), 5);
}

TEST(ModelSpecParser, Errors) {
  EXPECT_EQ(kind_of([] { spec_of("response: y\nfoo: bar\n"); }), ErrorKind::Spec);
  EXPECT_EQ(kind_of([] { spec_of("response: y\nsmooth: fs(x) k=5\n"); }), ErrorKind::Spec);
  EXPECT_EQ(kind_of([] { spec_of("response: y\nsmooth: tp(x)\nsmooth: tp(x)\n"); }), ErrorKind::Spec);
  EXPECT_EQ(kind_of([] { spec_of("smooth: tp(x)\n"); }), ErrorKind::Spec);
  EXPECT_EQ(kind_of([] { spec_of("response: y\nrho: 1.0\n"); }), ErrorKind::Domain);
}

TEST(Assemble, InterceptOnly) {
  DataTable t;
  t.set_numeric("y", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  auto d = assemble(t, spec_of("response: y"));
  EXPECT_EQ(d.X.rows(), 10);
  EXPECT_EQ(d.X.cols(), 1);
  EXPECT_TRUE((d.X.array() == 1.0).all());
  EXPECT_TRUE(d.penalties.empty());
}

TEST(Assemble, SmoothAbsorbsOneConstraint) {
  auto t = sine_data(50, 0.1, 1);
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=10"));
  EXPECT_EQ(d.p(), 10);
  EXPECT_EQ(d.terms[1].size, 9);
  EXPECT_LT(d.X.rightCols(9).colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  ASSERT_EQ(d.penalties.size(), 1u);
  EXPECT_TRUE(d.penalties[0].diagonal);
}

TEST(Assemble, SumCodingAndSeriesOrder) {
  DataTable t;
  t.set_numeric("y", {1, 2, 3, 4});
  t.set_factor("size", std::vector<std::string>{"big", "small", "small", "big"});
  t.set_factor("subj", std::vector<std::string>{"b", "a", "b", "a"});
  t.set_numeric("trial", {2, 2, 1, 1});
  auto d = assemble(t, spec_of("response: y\nparametric: size coding=sum\nseries: subj order: trial"));
  EXPECT_EQ(d.p(), 2);
  for (Index i = 0; i < 4; ++i) EXPECT_TRUE(d.X(i, 1) == -0.5 || d.X(i, 1) == 0.5);
  EXPECT_EQ(d.row_index, (std::vector<std::size_t>{3, 1, 2, 0}));
  EXPECT_EQ(d.y(0), 4.0);
  EXPECT_EQ(d.series, (std::vector<int>{0, 0, 1, 1}));

  t.set_numeric("trial", {1, 2, 1, 2});
  t.set_factor("subj", std::vector<std::string>{"a", "a", "a", "b"});
  EXPECT_EQ(kind_of([&] { assemble(t, spec_of("response: y\nseries: subj order: trial")); }), ErrorKind::Ordering);
}

TEST(Assemble, ThreeLevelCodings) {
  DataTable t;
  t.set_numeric("y", {1, 2, 3, 4, 5, 6});
  t.set_factor("f", std::vector<std::string>{"a", "b", "c", "a", "b", "c"});
  auto ds = assemble(t, spec_of("response: y\nparametric: f coding=sum"));
  EXPECT_EQ(ds.X.row(0), (Eigen::RowVector3d(1, -1, -1)));
  EXPECT_EQ(ds.X.row(1), (Eigen::RowVector3d(1, 1, 0)));
  auto dt = assemble(t, spec_of("response: y\nparametric: f"));
  EXPECT_EQ(dt.X.row(0), (Eigen::RowVector3d(1, 0, 0)));
  EXPECT_EQ(dt.X.row(2), (Eigen::RowVector3d(1, 0, 1)));
  EXPECT_EQ(dt.terms[1].column_names, (std::vector<std::string>{"f[b]", "f[c]"}));
}

TEST(Whiten, Examples) {
  DataTable t;
  t.set_numeric("y", {1.0, 0.5, 0.25});
  auto d = assemble(t, spec_of("response: y"));
  auto w0 = ar1_whiten(d, 0.0);
  EXPECT_EQ(w0.X, d.X);
  EXPECT_EQ(w0.y, d.y);
  auto w = ar1_whiten(d, 0.5);
  EXPECT_NEAR(w.y(0), std::sqrt(0.75), 1e-15);
  EXPECT_NEAR(w.y(1), 0.0, 1e-15);
  EXPECT_NEAR(w.y(2), 0.0, 1e-15);
  EXPECT_EQ(kind_of([&] { ar1_whiten(d, 1.0); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([&] { ar1_whiten(d, -0.1); }), ErrorKind::Domain);
  auto bad = d;
  bad.order = {3, 2, 1};
  EXPECT_EQ(kind_of([&] { ar1_whiten(bad, 0.3); }), ErrorKind::Ordering);
}

TEST(Whiten, MatchesInverseCorrelationQuadraticForm) {
  // Two series of lengths 5 and 7 against the dense AR(1) correlation matrix.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> y, x, trial;
  std::vector<std::string> s;
  for (int k : {5, 7})
    for (int i = 0; i < k; ++i) {
      y.push_back(nd(rng));
      x.push_back(nd(rng));
      trial.push_back(i);
      s.push_back(k == 5 ? "a" : "b");
    }
  DataTable t;
  t.set_numeric("y", y);
  t.set_numeric("x", x);
  t.set_numeric("trial", trial);
  t.set_factor("s", s);
  auto d = assemble(t, spec_of("response: y\nparametric: x\nseries: s order: trial"));
  const double rho = 0.4;
  auto w = ar1_whiten(d, rho);
  MatrixXd C = MatrixXd::Zero(12, 12);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j)
      if ((i < 5) == (j < 5)) C(i, j) = std::pow(rho, std::abs(i - j));
  // Whitened errors have the innovation variance (1 - rho^2) times the
  // marginal one, so W^T W = (1 - rho^2) C^{-1}.
  MatrixXd Ci = (1.0 - rho * rho) * C.inverse();
  EXPECT_LT((w.X.transpose() * w.X - d.X.transpose() * Ci * d.X).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(w.y.squaredNorm(), d.y.dot(Ci * d.y), 1e-12);
}

TEST(Pls, UnpenalizedIsOls) {
  auto t = sine_data(60, 0.2, 2);
  auto d = assemble(t, spec_of("response: y\nsmooth: poly(x) k=4"));
  PenalizedProblem prob(d);
  auto sol = pls_solve(prob, VectorXd(0));
  VectorXd ols = (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * d.y);
  EXPECT_LT((sol.beta - ols).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((sol.edf.array() - 1.0).abs().maxCoeff(), 1e-10);
}

TEST(Pls, MatchesDenseNormalEquations) {
  DataTable t;
  t.set_numeric("x", {0.0, 0.2, 0.5, 0.7, 1.0});
  t.set_numeric("y", {0.3, -0.1, 0.8, 0.2, 0.5});
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=4"));
  PenalizedProblem prob(d);
  VectorXd lambda = VectorXd::Ones(1);
  auto sol = pls_solve(prob, lambda);
  MatrixXd H = d.X.transpose() * d.X + full_penalty(d, lambda);
  VectorXd beta = H.fullPivLu().solve(d.X.transpose() * d.y);
  EXPECT_LT((sol.beta - beta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((sol.Vb_unscaled - H.inverse()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pls, InterpolationLimit) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i / 19.0 + 0.01 * std::sin(i));
    y.push_back(nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  FitOptions opt;
  opt.lambdas = std::vector<double>{0.0};
  auto m = fit(t, spec_of("response: y\nsmooth: cr(x) k=20"), opt);
  EXPECT_LT((m.fitted - m.design->y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Pls, NullSpaceLimitIsStraightLine) {
  auto t = sine_data(100, 0.3, 6);
  FitOptions opt;
  opt.lambdas = std::vector<double>{1e12};
  auto m = fit(t, spec_of("response: y\nsmooth: tp(x) k=10"), opt);
  MatrixXd L(100, 2);
  L.col(0).setOnes();
  for (Index i = 0; i < 100; ++i) L(i, 1) = m.design->data.values("x")[static_cast<std::size_t>(i)];
  VectorXd line = L * (L.transpose() * L).ldlt().solve(L.transpose() * m.design->y);
  EXPECT_LT((m.fitted - line).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(m.term_edf("s(x)"), 1.0, 1e-4);
}

TEST(Pls, EdfMonotoneAndBounded) {
  auto t = sine_data(100, 0.3, 7);
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=12"));
  PenalizedProblem prob(d);
  EXPECT_NEAR(pls_solve(prob, VectorXd::Zero(1)).edf.sum(), 12.0, 0.01);
  double prev = 1e300;
  for (int i = 0; i < 20; ++i) {
    const double lambda = std::pow(10.0, -6.0 + 18.0 * i / 19.0);
    auto sol = pls_solve(prob, VectorXd::Constant(1, lambda));
    EXPECT_LE(sol.edf.sum(), prev + 1e-9);
    prev = sol.edf.sum();
    EXPECT_GE(sol.edf.minCoeff(), -1e-10);
    EXPECT_LE(sol.edf.maxCoeff(), 1.0 + 1e-10);
  }
  EXPECT_NEAR(prev, 2.0, 0.01);
}

TEST(Pls, RankDeficiencyNamesTerm) {
  DataTable t;
  std::vector<double> x{1, 2, 3, 4, 5, 6};
  t.set_numeric("y", {1, 3, 2, 5, 4, 6});
  t.set_numeric("x", x);
  t.set_numeric("x2", x);
  try {
    fit(t, spec_of("response: y\nparametric: x\nparametric: x2"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Rank);
    EXPECT_NE(std::string(e.what()).find("'x"), std::string::npos);
  }
}

TEST(Reml, MatchesMixedModelOraclePointwise) {
  auto t = sine_data(80, 0.3, 8);
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=10"));
  for (double l : {-6.0, -2.0, 0.0, 3.0, 8.0}) {
    VectorXd ll = VectorXd::Constant(1, l);
    const double a = reml_score(d, ll);
    const double b = reml_mixed_model(d, ll);
    EXPECT_NEAR(a, b, 1e-6 * std::abs(b)) << "log lambda " << l;
  }
}

TEST(Reml, TwoPenaltyOracleAndPermutationInvariance) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> nd(0.0, 0.2);
  std::vector<double> x, z, y;
  for (int i = 0; i < 120; ++i) {
    x.push_back(u(rng));
    z.push_back(u(rng));
    y.push_back(std::sin(3 * x.back()) + z.back() * z.back() + nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("z", z);
  t.set_numeric("y", y);
  auto d = assemble(t, spec_of("response: y\nsmooth: te(x, z) k=4,4"));
  ASSERT_EQ(d.penalties.size(), 2u);
  Eigen::Vector2d ll(1.0, -2.0);
  EXPECT_NEAR(reml_score(d, ll), reml_mixed_model(d, ll), 1e-6 * std::abs(reml_mixed_model(d, ll)));
  auto swapped = d;
  std::swap(swapped.penalties[0], swapped.penalties[1]);
  std::swap(swapped.terms[1].penalties[0], swapped.terms[1].penalties[1]);
  EXPECT_NEAR(reml_score(swapped, Eigen::Vector2d(-2.0, 1.0)), reml_score(d, ll), 1e-10);
}

TEST(Reml, OptimizerWithinOneGridStep) {
  auto t = sine_data(150, 0.3, 10);
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=15"));
  std::vector<double> grid;
  for (int i = 0; i < 200; ++i) grid.push_back(std::log(1e-8) + (std::log(1e8) - std::log(1e-8)) * i / 199.0);
  auto oracle = grid_reml_oracle(d, grid);
  PenalizedProblem prob(d);
  auto opt = optimize_lambdas(prob);
  const double step = grid[1] - grid[0];
  EXPECT_LE(std::abs(opt.log_lambda(0) - grid[oracle.argmin]), step);
  EXPECT_TRUE(opt.converged);
}

TEST(Reml, RandomInterceptArgminMatchesAnova) {
  auto t = balanced_groups(20, 10, 1.0, 1.0, 11);
  auto d = assemble(t, spec_of("response: y\nrandom: intercept(g)"));
  auto anova = blup_oracle(t, "y", "g");
  std::vector<double> grid;
  for (int i = 0; i < 200; ++i) grid.push_back(-8.0 + 16.0 * i / 199.0);
  auto oracle = grid_reml_oracle(d, grid);
  const double target = std::log(anova.sigma2_hat / anova.sigmab2_hat);
  EXPECT_LE(std::abs(grid[oracle.argmin] - target), grid[1] - grid[0]);
}

TEST(Reml, AffineDataDrivesLambdaToUpperBound) {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i / 39.0);
    y.push_back(2.0 + 3.0 * x.back());
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  auto m = fit(t, spec_of("response: y\nsmooth: tp(x) k=8"));
  EXPECT_GT(std::log10(m.lambda(0)), 11.0);
}

TEST(Reml, DuplicatedPenaltiesRidge) {
  auto t = sine_data(80, 0.3, 12);
  auto d = assemble(t, spec_of("response: y\nsmooth: cr(x) k=10"));
  auto dup = d;
  dup.penalties.push_back(d.penalties[0]);
  dup.terms[1].penalties.push_back(1);
  PenalizedProblem single(d), twin(dup);
  auto a = optimize_lambdas(single);
  auto b = optimize_lambdas(twin);
  EXPECT_NEAR(a.score, b.score, 1e-6);
  const double sum = std::exp(b.log_lambda(0)) + std::exp(b.log_lambda(1));
  EXPECT_NEAR(std::log(sum), a.log_lambda(0), 1e-2);
}

TEST(Fit, InterceptOnlyClosedForm) {
  DataTable t;
  t.set_numeric("y", {1.0, 4.0, 2.0, 8.0, 5.0});
  auto m = fit(t, spec_of("response: y"));
  EXPECT_NEAR(m.beta(0), 4.0, 1e-12);
  EXPECT_NEAR(m.sigma2, (9.0 + 0.0 + 4.0 + 16.0 + 1.0) / 4.0, 1e-12);
}

TEST(Fit, SineRecovery) {
  std::vector<double> truth;
  auto t = sine_data(200, 0.1, 13, &truth);
  auto m = fit(t, spec_of("response: y\nsmooth: cr(x) k=20"));
  double mse = 0.0;
  for (Index i = 0; i < m.n(); ++i) {
    const double f = truth[m.design->row_index[static_cast<std::size_t>(i)]];
    mse += (m.fitted(i) - f) * (m.fitted(i) - f) / 200.0;
  }
  EXPECT_LT(std::sqrt(mse), 0.05);
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Fit, GradientVanishesAtOptimum) {
  auto t = sine_data(150, 0.2, 14);
  auto m = fit(t, spec_of("response: y\nsmooth: tp(x) k=12"));
  const auto& d = *m.whitened;
  VectorXd g = d.X.transpose() * (d.X * m.beta - d.y) + full_penalty(d, m.lambda) * m.beta;
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-6 * (d.X.transpose() * d.y).norm());
}

TEST(Fit, RhoContinuityAndZeroInvariance) {
  gammkit::ScenarioSpec sc;
  sc.n_subjects = 4;
  sc.n_trials = 60;
  sc.rho = 0.3;
  sc.sigma = 1.0;
  auto [t, truth] = gen_experiment(sc);
  auto spec = spec_of("response: y\nsmooth: tp(trial) k=6\nseries: subject order: trial");
  auto m0 = fit(t, spec, {.rho = 0.0});
  auto m1 = fit(t, spec, {.rho = 0.001});
  EXPECT_LT((m0.fitted - m1.fitted).cwiseAbs().maxCoeff(), 1e-3);
  // rho = 0 skips whitening entirely: solving the unwhitened design at the
  // same smoothing parameters is bit-identical.
  auto d = assemble(t, spec);
  auto w = ar1_whiten(d, 0.0);
  PenalizedProblem pd(d), pw(w);
  EXPECT_EQ(pls_solve(pd, m0.lambda).beta, m0.beta);
  EXPECT_EQ(pls_solve(pw, m0.lambda).beta, m0.beta);
}

TEST(Fit, BlupEquivalence) {
  auto t = balanced_groups(20, 10, 0.8, 1.0, 15);
  auto oracle = blup_oracle(t, "y", "g");
  FitOptions opt;
  opt.lambdas = std::vector<double>{oracle.sigma2_hat / oracle.sigmab2_hat};
  auto m = fit(t, spec_of("response: y\nrandom: intercept(g)"), opt);
  VectorXd b = m.term_coefficients("re(g)");
  for (std::size_t j = 0; j < oracle.blups.size(); ++j) EXPECT_NEAR(b(static_cast<Index>(j)), oracle.blups[j], 1e-6);
  EXPECT_NEAR(m.beta(0), oracle.mu_hat, 1e-6);
}

TEST(Fit, FactorSmoothWithStiffWigglinessIsPerGroupLine) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> nd;
  std::vector<double> y, trial;
  std::vector<std::string> g;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 30; ++i) {
      trial.push_back(i);
      g.push_back("s" + std::to_string(s));
      y.push_back(s + 0.1 * s * i + nd(rng));
    }
  DataTable t;
  t.set_numeric("y", y);
  t.set_numeric("trial", trial);
  t.set_factor("g", g);
  FitOptions opt;
  opt.lambdas = std::vector<double>{1e12, 1e-14};
  auto m = fit(t, spec_of("response: y\nsmooth: fs(trial, g) k=5"), opt);
  for (int s = 0; s < 4; ++s) {
    MatrixXd L(30, 2);
    VectorXd ys(30), fs(30);
    for (int i = 0; i < 30; ++i) {
      L(i, 0) = 1.0;
      L(i, 1) = i;
      ys(i) = y[static_cast<std::size_t>(30 * s + i)];
      fs(i) = m.fitted(30 * s + i);
    }
    VectorXd line = L * (L.transpose() * L).ldlt().solve(L.transpose() * ys);
    EXPECT_LT((fs - line).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Predict, TrainingDataReproducesFitted) {
  auto t = sine_data(100, 0.2, 17);
  auto m = fit(t, spec_of("response: y\nsmooth: cr(x) k=10"));
  auto p = predict(m, m.design->data);
  EXPECT_LT((p.mean - m.fitted).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_FALSE(p.extrapolated);
  EXPECT_TRUE((p.se.array() > 0.0).all());
}

TEST(Predict, MaskingAndLevels) {
  auto t = balanced_groups(6, 8, 1.0, 0.5, 18);
  auto m = fit(t, spec_of("response: y\nrandom: intercept(g)"));
  PredictOptions opt;
  opt.exclude = {"re(g)"};
  auto p = predict(m, m.design->data, opt);
  EXPECT_LT((p.mean.array() - m.beta(0)).abs().maxCoeff(), 1e-12);
  DataTable nd;
  nd.set_numeric("y", {0.0});
  nd.set_factor("g", std::vector<std::string>{"zz"});
  EXPECT_EQ(kind_of([&] { predict(m, nd); }), ErrorKind::Level);
  EXPECT_EQ(kind_of([&] { partial_effect(m, "s(nope)", nd); }), ErrorKind::Lookup);
}

TEST(Predict, ExtrapolationFlagged) {
  auto t = sine_data(100, 0.2, 19);
  auto m = fit(t, spec_of("response: y\nsmooth: cr(x) k=10"));
  DataTable nd;
  nd.set_numeric("x", {1.5});
  auto p = predict(m, nd);
  EXPECT_TRUE(p.extrapolated);
  PredictOptions strict;
  strict.allow_extrapolation = false;
  EXPECT_EQ(kind_of([&] { predict(m, nd, strict); }), ErrorKind::Extrapolation);
}

TEST(PartialEffect, LinearTruthGivesCentredLine) {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i / 49.0);
    y.push_back(1.0 + 2.0 * x.back());
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  auto m = fit(t, spec_of("response: y\nsmooth: tp(x) k=6"));
  auto g = effect_grid(m, "s(x)", 11);
  auto pe = partial_effect(m, "s(x)", g);
  for (Index i = 0; i < 11; ++i) EXPECT_NEAR(pe.mean(i), 2.0 * (g.values("x")[static_cast<std::size_t>(i)] - 0.5), 1e-6);
}

TEST(PartialEffect, AdditiveDecompositionAndLattice) {
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> nd(0.0, 0.1);
  std::vector<double> x, z, w, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(u(rng));
    z.push_back(u(rng));
    w.push_back(u(rng));
    y.push_back(std::sin(3 * x.back()) * z.back() + w.back() + nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("z", z);
  t.set_numeric("w", w);
  t.set_numeric("y", y);
  auto m = fit(t, spec_of("response: y\nparametric: w\nsmooth: te(x, z) k=5,5"));
  PredictOptions only_te;
  only_te.terms = {"te(x,z)"};
  VectorXd sum = predict(m, m.design->data, only_te).mean;
  sum.array() += m.beta(0);
  sum += m.beta(1) * m.design->X.col(1);
  EXPECT_LT((sum - m.fitted).cwiseAbs().maxCoeff(), 1e-10);
  auto grid = effect_grid(m, "te(x,z)", 40);
  auto pe = partial_effect(m, "te(x,z)", grid);
  EXPECT_EQ(pe.mean.size(), 1600);
  EXPECT_TRUE(pe.se.allFinite());
}

TEST(PartialEffect, SePinchesWhereEffectCrossesZero) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> nd(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 0; i < 200; ++i) {
    x.push_back(u(rng));
    y.push_back(2.0 * x.back() + nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  auto m = fit(t, spec_of("response: y\nsmooth: tp(x) k=10"));
  auto g = effect_grid(m, "s(x)", 401);
  auto pe = partial_effect(m, "s(x)", g);
  Index at;
  pe.se.minCoeff(&at);
  EXPECT_GT(at, 0);
  EXPECT_LT(at, 400);
  EXPECT_LT(std::abs(pe.mean(at)), 0.02 * pe.mean.cwiseAbs().maxCoeff());
  EXPECT_LT(pe.se(at), 0.1 * pe.se.maxCoeff());
}

TEST(Fit, TiDecompositionMatchesTeAtTiedLambdas) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> nd(0.0, 0.2);
  std::vector<double> x, z, y;
  for (int i = 0; i < 300; ++i) {
    x.push_back(u(rng));
    z.push_back(u(rng));
    y.push_back(std::sin(2 * M_PI * x.back()) + std::cos(M_PI * z.back()) + nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("z", z);
  t.set_numeric("y", y);
  auto te = fit(t, spec_of("response: y\nsmooth: te(x, z) k=5,5"));
  const double la = te.raw_lambda(0), lb = te.raw_lambda(1);
  FitOptions opt;
  opt.lambdas = std::vector<double>{la, lb, la, lb};
  opt.raw_lambdas = true;
  auto ti = fit(t, spec_of("response: y\nsmooth: ti(x) k=5\nsmooth: ti(z) k=5\nsmooth: ti(x, z) k=5,5"), opt);
  EXPECT_EQ(ti.design->p(), te.design->p());
  EXPECT_LT((ti.fitted - te.fitted).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Fit, ByFactorTermsAndFixedLambdaLength) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> nd(0.0, 0.2);
  std::vector<double> x, y;
  std::vector<std::string> g;
  for (int i = 0; i < 200; ++i) {
    x.push_back(u(rng));
    const bool b = i % 2;
    g.push_back(b ? "b" : "a");
    y.push_back((b ? std::sin(6 * x.back()) : x.back()) + nd(rng));
  }
  DataTable t;
  t.set_numeric("x", x);
  t.set_numeric("y", y);
  t.set_factor("g", g);
  auto spec = spec_of("response: y\nparametric: g\nsmooth: tp(x) k=8 by=g");
  auto m = fit(t, spec);
  EXPECT_NO_THROW(m.design->term("s(x):a"));
  EXPECT_NO_THROW(m.design->term("s(x):b"));
  EXPECT_GT(m.term_edf("s(x):b"), m.term_edf("s(x):a") + 2.0);
  EXPECT_GT(m.term_edf("s(x):b"), 4.0);
  FitOptions bad;
  bad.lambdas = std::vector<double>{1.0};
  EXPECT_EQ(kind_of([&] { fit(t, spec, bad); }), ErrorKind::Length);
}
