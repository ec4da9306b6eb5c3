#ifndef GAMMKIT_FIT_HPP
#define GAMMKIT_FIT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammkit/data.hpp"
#include "gammkit/design.hpp"
#include "gammkit/model.hpp"
#include "gammkit/pls.hpp"

namespace gammkit {

struct FitOptions {
  std::optional<double> rho;                   // overrides the spec
  std::optional<std::vector<double>> lambdas;  // fixed smoothing parameters, no optimization
  bool raw_lambdas = false;                    // fixed values refer to the unscaled basis penalties
  OptimizerOptions optimizer;
};

/// A fitted model. Vectors indexed by observation follow the model row
/// order (design->row_index maps back to input rows).
struct FittedModel {
  ModelSpec spec;
  std::shared_ptr<const AssembledDesign> design;    // unwhitened
  std::shared_ptr<const AssembledDesign> whitened;  // equal to design when rho = 0
  double rho = 0.0;

  VectorXd beta;
  VectorXd lambda;
  MatrixXd Vb;           // Bayesian posterior covariance, sigma2 * Vb_unscaled
  MatrixXd Vb_unscaled;
  VectorXd edf;          // per coefficient
  double total_edf = 0.0;
  double total_edf1 = 0.0;  // tr(2F - FF) with F the edf matrix; used for reference distributions
  double sigma2 = 0.0;
  double rss = 0.0;           // raw residual sum of squares
  double rss_whitened = 0.0;  // on the whitened scale
  double reml = 0.0;          // negative restricted log-likelihood at the optimum
  double loglik = 0.0;        // Gaussian log-likelihood with the ML scale

  VectorXd fitted;
  VectorXd residuals;
  VectorXd residuals_whitened;

  bool converged = true;
  bool ridge_added = false;
  int evaluations = 0;
  std::vector<std::string> warnings;

  Index n() const { return design->n(); }

  double raw_lambda(std::size_t j) const { return lambda(static_cast<Index>(j)) * design->penalties.at(j).scale; }

  double term_edf(const std::string& label) const {
    const auto& t = design->term(label);
    return edf.segment(t.start, t.size).sum();
  }

  VectorXd term_coefficients(const std::string& label) const {
    const auto& t = design->term(label);
    return beta.segment(t.start, t.size);
  }
};

namespace detail {

inline double ar1_log_jacobian(double rho, std::size_t n_series) {
  return 0.5 * static_cast<double>(n_series) * std::log(1.0 - rho * rho);
}

}  // namespace detail

/// Fits a Gaussian additive mixed model by penalized least squares with
/// smoothing parameters chosen by REML, after AR(1) whitening when rho > 0.
inline FittedModel fit(const DataTable& data, const ModelSpec& spec, const FitOptions& options = {}) {
  FittedModel m;
  m.spec = spec;
  m.rho = options.rho.value_or(spec.rho);
  m.spec.rho = m.rho;
  auto design = std::make_shared<AssembledDesign>(assemble(data, m.spec));
  m.design = design;
  m.whitened = m.rho > 0.0 ? std::make_shared<AssembledDesign>(ar1_whiten(*design, m.rho)) : m.design;
  const AssembledDesign& w = *m.whitened;

  PenalizedProblem prob(w);
  const Index k = prob.n_lambda();
  VectorXd lambda(k);
  if (options.lambdas) {
    if (static_cast<Index>(options.lambdas->size()) != k)
      fail(ErrorKind::Length, "expected " + std::to_string(k) + " smoothing parameters, got " + std::to_string(options.lambdas->size()));
    for (Index j = 0; j < k; ++j) {
      const double v = (*options.lambdas)[static_cast<std::size_t>(j)];
      lambda(j) = options.raw_lambdas ? v / w.penalties[static_cast<std::size_t>(j)].scale : v;
    }
    m.reml = prob.reml(lambda.array().max(std::numeric_limits<double>::min()).log().matrix());
  } else {
    auto opt = optimize_lambdas(prob, std::nullopt, options.optimizer);
    lambda = opt.log_lambda.array().exp();
    m.reml = opt.score;
    m.converged = opt.converged;
    m.evaluations = opt.evaluations;
    if (!opt.converged) m.warnings.push_back("smoothing parameter optimization reached its evaluation limit");
  }
  m.reml -= detail::ar1_log_jacobian(m.rho, w.n_series());
  m.lambda = lambda;

  PlsSolution sol = pls_solve(prob, lambda);
  m.ridge_added = sol.ridge_added;
  if (sol.ridge_added) m.warnings.push_back("a small ridge was added to stabilize a near-singular system");
  m.beta = sol.beta;
  m.Vb_unscaled = sol.Vb_unscaled;
  m.edf = sol.edf;
  m.total_edf = sol.edf.sum();
  {
    const MatrixXd F = sol.Vb_unscaled * prob.XtX();
    m.total_edf1 = 2.0 * F.trace() - F.cwiseProduct(F.transpose()).sum();
  }
  m.rss_whitened = sol.rss;
  const double n = static_cast<double>(w.n());
  if (n - m.total_edf > 1e-8) {
    m.sigma2 = sol.rss / (n - m.total_edf);
  } else {
    m.sigma2 = std::numeric_limits<double>::quiet_NaN();
    m.warnings.push_back("no residual degrees of freedom: the scale is not estimable");
  }
  m.Vb = m.sigma2 * m.Vb_unscaled;
  m.fitted = design->X * m.beta;
  m.residuals = design->y - m.fitted;
  m.rss = m.residuals.squaredNorm();
  m.residuals_whitened = w.y - w.X * m.beta;
  m.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * sol.rss / n) + 1.0) + detail::ar1_log_jacobian(m.rho, w.n_series());
  return m;
}

struct PredictOptions {
  std::vector<std::string> terms;    // include only these (empty: all terms)
  std::vector<std::string> exclude;  // drop these
  bool allow_extrapolation = true;
};

struct Prediction {
  VectorXd mean;
  VectorXd se;
  bool extrapolated = false;
};

/// Model matrix rows for new data restricted to the selected terms; other
/// columns are zero.
inline MatrixXd predict_matrix(const FittedModel& m, const DataTable& newdata, const PredictOptions& opt, bool& extrapolated) {
  const AssembledDesign& d = *m.design;
  for (const auto& l : opt.terms) d.term(l);
  for (const auto& l : opt.exclude) d.term(l);
  MatrixXd X = MatrixXd::Zero(static_cast<Index>(newdata.n_rows()), d.p());
  EvalOptions eo{opt.allow_extrapolation};
  EvalInfo info;
  for (const auto& t : d.terms) {
    const bool chosen = opt.terms.empty() || std::find(opt.terms.begin(), opt.terms.end(), t.label) != opt.terms.end();
    const bool dropped = std::find(opt.exclude.begin(), opt.exclude.end(), t.label) != opt.exclude.end();
    if (!chosen || dropped) continue;
    MatrixXd cols = t.evaluate(newdata, eo, info);
    if (cols.cols() != t.size) fail(ErrorKind::Shape, "term '" + t.label + "' evaluated to the wrong width");
    X.middleCols(t.start, t.size) = cols;
  }
  extrapolated = info.extrapolated;
  return X;
}

/// Predictions with pointwise standard errors from the posterior covariance.
inline Prediction predict(const FittedModel& m, const DataTable& newdata, const PredictOptions& opt = {}) {
  Prediction out;
  MatrixXd X = predict_matrix(m, newdata, opt, out.extrapolated);
  out.mean = X * m.beta;
  out.se = ((X * m.Vb).cwiseProduct(X)).rowwise().sum().cwiseMax(0.0).cwiseSqrt();
  return out;
}

/// Evaluation grid for one term: covariates over their training range
/// (a lattice for two covariates, first covariate varying slowest), the
/// term's factor fixed at its level, or at every level for random effects.
inline DataTable effect_grid(const FittedModel& m, const std::string& label, int n_points = 100,
                             std::optional<std::string> level = std::nullopt) {
  const AssembledDesign& d = *m.design;
  const DesignTerm& t = d.term(label);
  if (n_points < 2) fail(ErrorKind::Domain, "grid needs at least 2 points");
  DataTable g;
  auto range_of = [&](const std::string& name) {
    const auto& v = d.data.values(name);
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    VectorXd pts = VectorXd::LinSpaced(n_points, *lo, *hi);
    return std::vector<double>(pts.data(), pts.data() + pts.size());
  };
  if (t.kind == TermKind::Random) {
    const auto& f = d.data.factor(*t.factor);
    g.set_factor(*t.factor, f.levels);
    for (const auto& c : t.covariates) g.set_numeric(c, std::vector<double>(f.n_levels(), 1.0));
    return g;
  }
  if (t.kind != TermKind::Smooth) fail(ErrorKind::Spec, "effect grids are built for smooth and random terms");
  std::size_t rows = 0;
  if (t.covariates.size() == 1) {
    auto x = range_of(t.covariates[0]);
    rows = x.size();
    g.set_numeric(t.covariates[0], x);
  } else {
    auto a = range_of(t.covariates[0]);
    auto b = range_of(t.covariates[1]);
    std::vector<double> xa, xb;
    for (double va : a)
      for (double vb : b) {
        xa.push_back(va);
        xb.push_back(vb);
      }
    rows = xa.size();
    g.set_numeric(t.covariates[0], xa);
    g.set_numeric(t.covariates[1], xb);
  }
  if (t.factor) {
    const std::string lv = level ? *level : (t.level ? *t.level : d.data.factor(*t.factor).levels.front());
    FactorColumn f;
    f.levels = d.data.factor(*t.factor).levels;
    auto code = f.code_of(lv);
    if (!code) fail(ErrorKind::Level, "unknown level '" + lv + "'");
    f.codes.assign(rows, *code);
    g.set_factor(*t.factor, f);
  }
  return g;
}

/// Partial effect of one term with its pointwise standard error.
inline Prediction partial_effect(const FittedModel& m, const std::string& label, const DataTable& grid) {
  PredictOptions opt;
  opt.terms = {label};
  return predict(m, grid, opt);
}

}  // namespace gammkit

#endif  // GAMMKIT_FIT_HPP
