#ifndef GAMMKIT_SIMULATE_HPP
#define GAMMKIT_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "gammkit/data.hpp"
#include "gammkit/design.hpp"
#include "gammkit/error.hpp"

namespace gammkit {

enum class TrendKind { Flat, Linear, Undulating, Spiky };

inline TrendKind parse_trend_kind(const std::string& s) {
  if (s == "flat") return TrendKind::Flat;
  if (s == "linear") return TrendKind::Linear;
  if (s == "undulating") return TrendKind::Undulating;
  if (s == "spiky") return TrendKind::Spiky;
  fail(ErrorKind::Spec, "unknown trend kind '" + s + "'");
}

/// Random streams are keyed by (seed, component, subject) so that adding
/// subjects or components leaves earlier draws untouched.
enum class Stream : std::uint32_t { Trend = 1, Noise = 2, Assignment = 3, Intercept = 4, Covariate = 5 };

inline std::mt19937_64 make_stream(std::uint64_t seed, Stream component, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Mean-centred per-subject trend over trials 1..n_trials.
inline std::vector<double> gen_trend(TrendKind kind, int n_trials, double amplitude, std::uint64_t seed) {
  if (n_trials < 2) fail(ErrorKind::Domain, "trends need at least 2 trials");
  const auto n = static_cast<std::size_t>(n_trials);
  std::vector<double> out(n, 0.0);
  if (kind == TrendKind::Flat || amplitude == 0.0) return out;
  auto rng = make_stream(seed, Stream::Trend);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
  const double mid = 0.5 * (n_trials + 1);
  const double slope = amplitude * normal(rng);
  for (std::size_t t = 0; t < n; ++t) out[t] = slope * (static_cast<double>(t + 1) - mid) / (n_trials - 1);
  if (kind != TrendKind::Linear) {
    const int components = 1 + static_cast<int>(unif(rng) * 3.0);
    for (int c = 0; c < std::min(components, 3); ++c) {
      const double period = n_trials / 6.0 + unif(rng) * (n_trials - n_trials / 6.0);
      const double phase = 2.0 * std::numbers::pi * unif(rng);
      const double a = amplitude * normal(rng);
      for (std::size_t t = 0; t < n; ++t)
        out[t] += a * std::sin(2.0 * std::numbers::pi * static_cast<double>(t + 1) / period + phase);
    }
  }
  if (kind == TrendKind::Spiky) {
    boost::random::poisson_distribution<int> count(3.0);
    const int bursts = count(rng);
    const double width = std::max(1.0, n_trials / 100.0);
    for (int b = 0; b < bursts; ++b) {
      const double centre = unif(rng) * n_trials;
      const double height = 3.0 * amplitude * (0.5 + unif(rng));
      for (std::size_t t = 0; t < n; ++t) {
        const double z = (static_cast<double>(t + 1) - centre) / width;
        out[t] += height * std::exp(-0.5 * z * z);
      }
    }
  }
  double mean = 0.0;
  for (double v : out) mean += v / static_cast<double>(n);
  for (double& v : out) v -= mean;
  return out;
}

enum class FixedKind { Factor, Numeric };

/// A fixed effect: a two-level within-subject factor (coded -0.5/+0.5,
/// randomly assigned per trial) or a uniform(0, 1) covariate entering
/// through `f` (default: coefficient * x).
struct FixedEffect {
  std::string name;
  FixedKind kind = FixedKind::Factor;
  double coefficient = 0.0;
  std::function<double(double)> f;
};

struct ScenarioSpec {
  int n_subjects = 1;
  int n_trials = 100;
  std::vector<FixedEffect> fixed_effects;
  std::vector<std::pair<std::string, std::string>> interactions;  // products of two factors
  std::vector<double> interaction_coefficients;
  TrendKind trend = TrendKind::Flat;
  double trend_amplitude = 0.0;
  double rho = 0.0;
  double sigma = 1.0;
  double subject_intercept_sd = 0.0;
  double intercept = 0.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_subjects < 1 || n_trials < 1) fail(ErrorKind::Domain, "counts must be at least 1");
    if (sigma < 0.0 || subject_intercept_sd < 0.0 || trend_amplitude < 0.0) fail(ErrorKind::Domain, "standard deviations must be non-negative");
    if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorKind::Domain, "rho must lie in [0, 1)");
    if (interactions.size() != interaction_coefficients.size()) fail(ErrorKind::Length, "one coefficient per interaction");
  }
};

struct Truth {
  double intercept = 0.0;
  std::vector<double> fixed_coefficients;
  std::vector<double> interaction_coefficients;
  std::vector<double> subject_intercepts;
  std::vector<std::vector<double>> trends;  // per subject, per trial
  std::vector<double> fixed_part;           // per row
  std::vector<double> noise;                // per row
  double rho = 0.0;
  double sigma = 0.0;
};

inline std::vector<double> ar1_noise(int n, double rho, double sigma, std::mt19937_64& rng) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> e(static_cast<std::size_t>(n));
  double prev = 0.0;
  for (int t = 0; t < n; ++t) {
    const double innov = sigma * normal(rng);
    prev = t == 0 ? innov / std::sqrt(1.0 - rho * rho) : rho * prev + innov;
    e[static_cast<std::size_t>(t)] = prev;
  }
  return e;
}

/// Simulated experiment: columns y, subject (factor), trial (1..n_trials)
/// and one column per fixed effect; the series structure is subject/trial.
inline std::pair<DataTable, Truth> gen_experiment(const ScenarioSpec& spec) {
  spec.validate();
  const auto S = static_cast<std::size_t>(spec.n_subjects);
  const auto T = static_cast<std::size_t>(spec.n_trials);
  Truth truth;
  truth.intercept = spec.intercept;
  truth.rho = spec.rho;
  truth.sigma = spec.sigma;
  truth.interaction_coefficients = spec.interaction_coefficients;
  for (const auto& fe : spec.fixed_effects) truth.fixed_coefficients.push_back(fe.coefficient);

  std::vector<double> y(S * T), trial(S * T);
  std::vector<std::string> subject(S * T);
  std::vector<std::vector<double>> fx(spec.fixed_effects.size(), std::vector<double>(S * T));
  std::vector<std::vector<std::string>> flabels(spec.fixed_effects.size(), std::vector<std::string>(S * T));
  truth.fixed_part.assign(S * T, 0.0);
  truth.noise.assign(S * T, 0.0);

  for (std::size_t s = 0; s < S; ++s) {
    auto irng = make_stream(spec.seed, Stream::Intercept, s);
    boost::random::normal_distribution<double> normal(0.0, 1.0);
    const double b = spec.subject_intercept_sd * normal(irng);
    truth.subject_intercepts.push_back(b);
    truth.trends.push_back(gen_trend(spec.trend, spec.n_trials, spec.trend_amplitude,
                                     spec.seed * 1000003ULL + s + 1));
    auto nrng = make_stream(spec.seed, Stream::Noise, s);
    auto noise = ar1_noise(spec.n_trials, spec.rho, spec.sigma, nrng);
    auto arng = make_stream(spec.seed, Stream::Assignment, s);
    auto crng = make_stream(spec.seed, Stream::Covariate, s);
    boost::random::bernoulli_distribution<double> coin(0.5);
    boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t row = s * T + t;
      subject[row] = "s" + std::to_string(s + 1);
      trial[row] = static_cast<double>(t + 1);
      double fixed = 0.0;
      for (std::size_t j = 0; j < spec.fixed_effects.size(); ++j) {
        const auto& fe = spec.fixed_effects[j];
        if (fe.kind == FixedKind::Factor) {
          const bool high = coin(arng);
          fx[j][row] = high ? 0.5 : -0.5;
          flabels[j][row] = high ? "b" : "a";
        } else {
          fx[j][row] = unif(crng);
        }
        fixed += fe.f ? fe.f(fx[j][row]) : fe.coefficient * fx[j][row];
      }
      for (std::size_t k = 0; k < spec.interactions.size(); ++k) {
        auto index_of = [&](const std::string& name) {
          for (std::size_t j = 0; j < spec.fixed_effects.size(); ++j)
            if (spec.fixed_effects[j].name == name) return j;
          fail(ErrorKind::Spec, "unknown fixed effect '" + name + "'");
        };
        fixed += spec.interaction_coefficients[k] * fx[index_of(spec.interactions[k].first)][row] *
                 fx[index_of(spec.interactions[k].second)][row];
      }
      truth.fixed_part[row] = fixed;
      truth.noise[row] = noise[t];
      y[row] = spec.intercept + fixed + b + truth.trends[s][t] + noise[t];
    }
  }
  DataTable table;
  table.set_numeric("y", y);
  table.set_factor("subject", subject);
  table.set_numeric("trial", trial);
  for (std::size_t j = 0; j < spec.fixed_effects.size(); ++j) {
    if (spec.fixed_effects[j].kind == FixedKind::Factor) table.set_factor(spec.fixed_effects[j].name, flabels[j]);
    else table.set_numeric(spec.fixed_effects[j].name, fx[j]);
  }
  table.set_series("subject", "trial");
  return {std::move(table), std::move(truth)};
}

struct BlupOracle {
  double mu_hat = 0.0;
  double sigma2_hat = 0.0;
  double sigmab2_hat = 0.0;
  std::vector<std::string> levels;
  std::vector<double> blups;
  std::vector<double> shrinkage;
};

/// Closed-form balanced one-way random-effects ANOVA estimates and BLUPs.
inline BlupOracle blup_oracle(const DataTable& table, const std::string& response, const std::string& group) {
  const auto& y = table.values(response);
  const auto& g = table.factor(group);
  const std::size_t J = g.n_levels();
  std::vector<double> sum(J, 0.0);
  std::vector<std::size_t> count(J, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum[static_cast<std::size_t>(g.codes[i])] += y[i];
    ++count[static_cast<std::size_t>(g.codes[i])];
  }
  const std::size_t m = count.front();
  for (auto c : count)
    if (c != m) fail(ErrorKind::Balance, "blup_oracle needs equal group sizes");
  if (J < 2 || m < 2) fail(ErrorKind::Balance, "blup_oracle needs at least 2 groups of at least 2 rows");
  std::vector<double> mean(J);
  double grand = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    mean[j] = sum[j] / static_cast<double>(m);
    grand += mean[j] / static_cast<double>(J);
  }
  double ssw = 0.0, ssb = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - mean[static_cast<std::size_t>(g.codes[i])];
    ssw += d * d;
  }
  for (std::size_t j = 0; j < J; ++j) ssb += static_cast<double>(m) * (mean[j] - grand) * (mean[j] - grand);
  const double msw = ssw / static_cast<double>(J * (m - 1));
  const double msb = ssb / static_cast<double>(J - 1);
  BlupOracle out;
  out.mu_hat = grand;
  out.sigma2_hat = msw;
  out.sigmab2_hat = std::max(0.0, (msb - msw) / static_cast<double>(m));
  out.levels = g.levels;
  const double nb = static_cast<double>(m) * out.sigmab2_hat;
  for (std::size_t j = 0; j < J; ++j) {
    const double k = nb / (nb + out.sigma2_hat);
    out.shrinkage.push_back(k);
    out.blups.push_back(k * (mean[j] - grand));
  }
  return out;
}

/// Oracle variant working from summary quantities.
inline double blup_from_moments(double n_j, double sigma2, double sigmab2, double deviation) {
  return n_j * sigmab2 / (n_j * sigmab2 + sigma2) * deviation;
}

struct GridOracleResult {
  std::vector<double> scores;
  std::size_t argmin = 0;
};

/// Restricted likelihood evaluated as the marginal density of y in mixed
/// model form: penalized directions of S_lambda become Gaussian random
/// effects, unpenalized directions fixed effects with a flat prior.
/// Every quantity comes from dense n x n factorizations.
inline double reml_mixed_model(const AssembledDesign& d, const VectorXd& log_lambda) {
  const Index p = d.p(), n = d.n();
  MatrixXd S = MatrixXd::Zero(p, p), Ssum = MatrixXd::Zero(p, p);
  for (std::size_t j = 0; j < d.penalties.size(); ++j) {
    const auto& pen = d.penalties[j];
    const auto& t = d.terms[pen.term];
    S.block(t.start, t.start, t.size, t.size) += std::exp(log_lambda(static_cast<Index>(j))) * pen.S;
    Ssum.block(t.start, t.start, t.size, t.size) += pen.S;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> structural(Ssum, Eigen::EigenvaluesOnly);
  const double top = structural.eigenvalues().cwiseAbs().maxCoeff();
  Index rank = 0;
  for (Index i = 0; i < p; ++i)
    if (structural.eigenvalues()(i) > 1e-9 * top) ++rank;
  const Index M = p - rank;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  MatrixXd U0 = es.eigenvectors().leftCols(M);
  MatrixXd U1 = es.eigenvectors().rightCols(rank);
  VectorXd ev = es.eigenvalues().tail(rank);
  MatrixXd F = d.X * U0;
  MatrixXd Z = d.X * U1;
  MatrixXd V = MatrixXd::Identity(n, n) + Z * ev.cwiseInverse().asDiagonal() * Z.transpose();
  Eigen::LLT<MatrixXd> lv(V);
  if (lv.info() != Eigen::Success) fail(ErrorKind::Numeric, "marginal covariance factorization failed");
  double log_det_V = 0.0;
  for (Index i = 0; i < n; ++i) log_det_V += 2.0 * std::log(lv.matrixLLT()(i, i));
  double log_det_FVF = 0.0;
  VectorXd r = d.y;
  if (M > 0) {
    MatrixXd ViF = lv.solve(F);
    MatrixXd FVF = F.transpose() * ViF;
    Eigen::LLT<MatrixXd> lf(FVF);
    if (lf.info() != Eigen::Success) fail(ErrorKind::Numeric, "fixed-effect information factorization failed");
    for (Index i = 0; i < M; ++i) log_det_FVF += 2.0 * std::log(lf.matrixLLT()(i, i));
    VectorXd bf = lf.solve(ViF.transpose() * d.y);
    r = d.y - F * bf;
  }
  const double quad = r.dot(lv.solve(r));
  const double nm = static_cast<double>(n - M);
  const double s2 = quad / nm;
  return 0.5 * (nm * (std::log(2.0 * std::numbers::pi * s2) + 1.0) + log_det_V + log_det_FVF);
}

inline GridOracleResult grid_reml_oracle(const AssembledDesign& d, const std::vector<VectorXd>& log_grid) {
  if (d.penalties.empty() || d.penalties.size() > 2) fail(ErrorKind::Spec, "grid oracle handles one or two penalties");
  if (log_grid.empty() || log_grid.size() > 10000) fail(ErrorKind::Length, "grid must hold 1 to 10000 points");
  GridOracleResult out;
  for (const auto& point : log_grid) {
    if (point.size() != static_cast<Index>(d.penalties.size())) fail(ErrorKind::Length, "grid point dimension mismatch");
    out.scores.push_back(reml_mixed_model(d, point));
  }
  out.argmin = static_cast<std::size_t>(std::min_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  return out;
}

/// Single-penalty convenience: grid of log lambda values.
inline GridOracleResult grid_reml_oracle(const AssembledDesign& d, const std::vector<double>& log_grid) {
  std::vector<VectorXd> pts;
  for (double v : log_grid) pts.push_back(VectorXd::Constant(1, v));
  return grid_reml_oracle(d, pts);
}

}  // namespace gammkit

#endif  // GAMMKIT_SIMULATE_HPP
