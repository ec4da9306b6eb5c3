#ifndef GAMMKIT_INFERENCE_HPP
#define GAMMKIT_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "gammkit/fit.hpp"

namespace gammkit {

inline double term_edf(const FittedModel& m, const std::string& label) { return m.term_edf(label); }

/// AIC = -2 loglik + 2 (total edf + 1), the extra parameter being the scale.
inline double aic(const FittedModel& m) { return -2.0 * m.loglik + 2.0 * (m.total_edf + 1.0); }

namespace detail {

inline double f_upper(double F, double df1, double df2) {
  if (!(F > 0.0)) return 1.0;
  boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, F));
}

inline double chisq_upper(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  boost::math::chi_squared_distribution<double> dist(df);
  return boost::math::cdf(boost::math::complement(dist, x));
}

inline double t_two_sided(double t, double df) {
  boost::math::students_t_distribution<double> dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

inline bool same_response(const FittedModel& a, const FittedModel& b) {
  return a.whitened->n() == b.whitened->n() && a.rho == b.rho &&
         (a.whitened->y - b.whitened->y).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.whitened->y.cwiseAbs().maxCoeff());
}

}  // namespace detail

struct FTest {
  double F = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double p = 1.0;
  double delta_edf = 0.0;
  double delta_rss = 0.0;
};

/// F from summary quantities: (delta deviance / delta edf) / scale.
inline double f_statistic(double delta_deviance, double delta_edf, double scale) {
  if (!(delta_edf > 0.0) || !(scale > 0.0)) fail(ErrorKind::Domain, "F needs positive edf difference and scale");
  return delta_deviance / delta_edf / scale;
}

/// F test of a smaller model against a larger one fitted to the same
/// (whitened) response. Residual sums of squares are on the whitened scale.
/// The reference distribution uses tr(2F - FF) degrees of freedom, the
/// expected residual reduction of a linear smoother, in place of tr(F).
inline FTest nested_f_test(const FittedModel& small, const FittedModel& big) {
  if (!detail::same_response(small, big)) fail(ErrorKind::Nesting, "models were fitted to different responses or whitening");
  FTest out;
  out.delta_edf = big.total_edf - small.total_edf;
  out.delta_rss = small.rss_whitened - big.rss_whitened;
  out.df2 = static_cast<double>(big.n()) - big.total_edf1;
  if (std::abs(out.delta_edf) <= 1e-8 && std::abs(out.delta_rss) <= 1e-10 * std::max(1.0, big.rss_whitened)) return out;
  if (!(out.delta_edf > 0.0)) fail(ErrorKind::Nesting, "the second model must have more effective degrees of freedom");
  if (!(out.df2 > 0.0)) fail(ErrorKind::InsufficientData, "no residual degrees of freedom in the larger model");
  out.df1 = std::max(out.delta_edf, big.total_edf1 - small.total_edf1);
  out.F = std::max(0.0, f_statistic(out.delta_rss, out.df1, big.rss_whitened / out.df2));
  out.p = detail::f_upper(out.F, out.df1, out.df2);
  return out;
}

struct RemlComparison {
  double stat = 0.0;  // |score difference|
  double df = 0.0;
  std::optional<double> p;
  bool simpler_and_better = false;
  int preferred = 0;  // index of the model with the lower score
};

/// Parameter count used by the REML comparison: unpenalized coefficients
/// plus smoothing parameters.
inline int comparison_df(const FittedModel& m) {
  int k = static_cast<int>(m.lambda.size());
  for (const auto& t : m.design->terms)
    if (!t.penalized()) k += static_cast<int>(t.size);
  return k;
}

/// Comparison from stored scores and parameter counts. The statistic is the
/// raw score difference referred to chi-squared on the count difference.
inline RemlComparison compare_reml(double reml0, int df0, double reml1, int df1) {
  RemlComparison out;
  out.stat = std::abs(reml0 - reml1);
  out.df = std::abs(df1 - df0);
  out.preferred = reml1 < reml0 ? 1 : 0;
  const bool first_simpler = df0 < df1;
  const bool second_simpler = df1 < df0;
  if ((first_simpler && reml0 < reml1) || (second_simpler && reml1 < reml0)) {
    out.simpler_and_better = true;
    return out;
  }
  if (out.df > 0.0) out.p = detail::chisq_upper(out.stat, out.df);
  return out;
}

inline RemlComparison compare_reml(const FittedModel& m0, const FittedModel& m1) {
  if (m0.spec == m1.spec) fail(ErrorKind::Comparison, "the two models have identical specifications");
  if (!detail::same_response(m0, m1)) fail(ErrorKind::Comparison, "models were fitted to different responses or whitening");
  return compare_reml(m0.reml, comparison_df(m0), m1.reml, comparison_df(m1));
}

enum class SummaryKind { Parametric, Smooth, Random };

struct TermSummary {
  std::string term;
  SummaryKind kind = SummaryKind::Smooth;
  double edf = 0.0;
  double ref_df = 0.0;
  double statistic = 0.0;
  double p = 1.0;
  bool approximate = true;
};

/// Wald-type test of a whole term: beta' V^- beta / edf with the
/// pseudo-inverse of the term's posterior covariance at rank round(edf),
/// truncated in the metric of the term's fitted values.
inline TermSummary wald_term_test(const FittedModel& m, const std::string& label) {
  const DesignTerm& t = m.design->term(label);
  TermSummary out;
  out.term = label;
  out.kind = t.kind == TermKind::Random ? SummaryKind::Random : t.penalized() ? SummaryKind::Smooth : SummaryKind::Parametric;
  out.approximate = t.penalized();
  out.edf = m.term_edf(label);
  const double df2 = static_cast<double>(m.n()) - m.total_edf;
  if (out.edf < 1e-6) {
    out.edf = 0.0;
    return out;
  }
  // Work with the term's fitted values f = R b, where X_t = Q R, so the
  // rank truncation discards directions that barely move the fit.
  Eigen::HouseholderQR<MatrixXd> qr(m.whitened->X.middleCols(t.start, t.size));
  const MatrixXd R = qr.matrixQR().topRows(t.size).triangularView<Eigen::Upper>();
  const VectorXd b = R * m.beta.segment(t.start, t.size);
  const MatrixXd V = R * m.Vb.block(t.start, t.start, t.size, t.size) * R.transpose();
  const Index r = std::clamp<Index>(static_cast<Index>(std::llround(out.edf)), 1, t.size);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (V + V.transpose()));
  const VectorXd ev = es.eigenvalues().tail(r);
  if (!(ev.minCoeff() > 0.0)) return out;
  const VectorXd proj = es.eigenvectors().rightCols(r).transpose() * b;
  const double quad = proj.cwiseAbs2().cwiseQuotient(ev).sum();
  out.ref_df = static_cast<double>(r);
  out.statistic = quad / out.edf;
  out.p = detail::f_upper(out.statistic, out.edf, df2);
  return out;
}

struct CoefficientRow {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

struct ModelSummary {
  std::vector<CoefficientRow> parametric;
  std::vector<TermSummary> smooth;
  double total_edf = 0.0;
  double sigma2 = 0.0;
  double reml = 0.0;
  double aic = 0.0;
  double r_squared = 0.0;
  Index n = 0;
};

inline ModelSummary summarize(const FittedModel& m) {
  ModelSummary s;
  const double df2 = static_cast<double>(m.n()) - m.total_edf;
  for (const auto& t : m.design->terms) {
    if (t.penalized()) {
      s.smooth.push_back(wald_term_test(m, t.label));
      continue;
    }
    if (t.kind == TermKind::Smooth) {
      s.smooth.push_back(wald_term_test(m, t.label));
      continue;
    }
    for (Index j = 0; j < t.size; ++j) {
      CoefficientRow row;
      row.name = t.column_names.at(static_cast<std::size_t>(j));
      row.estimate = m.beta(t.start + j);
      row.se = std::sqrt(m.Vb(t.start + j, t.start + j));
      row.t = row.estimate / row.se;
      row.p = detail::t_two_sided(row.t, df2);
      s.parametric.push_back(row);
    }
  }
  s.total_edf = m.total_edf;
  s.sigma2 = m.sigma2;
  s.reml = m.reml;
  s.aic = aic(m);
  s.n = m.n();
  const VectorXd& y = m.design->y;
  const double tss = (y.array() - y.mean()).square().sum();
  s.r_squared = tss > 0.0 ? 1.0 - m.rss / tss : 0.0;
  return s;
}

}  // namespace gammkit

#endif  // GAMMKIT_INFERENCE_HPP
