#ifndef GAMMKIT_PLS_HPP
#define GAMMKIT_PLS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gammkit/design.hpp"
#include "gammkit/error.hpp"

namespace gammkit {

namespace detail {

/// Per-term penalty bookkeeping shared by the solver and the REML score.
struct TermPenalty {
  Index start = 0;
  Index size = 0;
  std::vector<std::size_t> ids;  // indices into the design's penalties
  bool diagonal = true;
  VectorXd mask;  // diagonal case: 1 on structurally penalized coordinates
  Index rank = 0;
};

inline std::vector<TermPenalty> term_penalties(const AssembledDesign& d) {
  std::vector<TermPenalty> out;
  for (const auto& t : d.terms) {
    if (!t.penalized()) continue;
    TermPenalty tp;
    tp.start = t.start;
    tp.size = t.size;
    tp.ids = t.penalties;
    MatrixXd sum = MatrixXd::Zero(t.size, t.size);
    for (auto j : t.penalties) {
      tp.diagonal = tp.diagonal && d.penalties[j].diagonal;
      sum += d.penalties[j].S;
    }
    if (tp.diagonal) {
      tp.mask = (sum.diagonal().array() > 0.0).cast<double>();
      tp.rank = static_cast<Index>(tp.mask.sum());
    } else {
      tp.rank = psd_rank(sum);
    }
    out.push_back(std::move(tp));
  }
  return out;
}

inline MatrixXd term_block(const AssembledDesign& d, const TermPenalty& tp, const VectorXd& lambda) {
  MatrixXd S = MatrixXd::Zero(tp.size, tp.size);
  for (auto j : tp.ids) S += lambda(static_cast<Index>(j)) * d.penalties[j].S;
  return S;
}

/// log|S_lambda|_+ over the structurally penalized subspace.
inline double log_det_penalty(const AssembledDesign& d, const std::vector<TermPenalty>& tps, const VectorXd& lambda) {
  double total = 0.0;
  for (const auto& tp : tps) {
    MatrixXd S = term_block(d, tp, lambda);
    if (tp.diagonal) {
      for (Index c = 0; c < tp.size; ++c)
        if (tp.mask(c) > 0.0) total += std::log(S(c, c));
    } else {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
      for (Index c = tp.size - tp.rank; c < tp.size; ++c) total += std::log(std::max(es.eigenvalues()(c), 1e-300));
    }
  }
  return total;
}

inline void add_penalty(MatrixXd& H, const AssembledDesign& d, const std::vector<TermPenalty>& tps, const VectorXd& lambda) {
  for (const auto& tp : tps) H.block(tp.start, tp.start, tp.size, tp.size) += term_block(d, tp, lambda);
}

/// Square root B with B^T B = S_lambda.
inline MatrixXd penalty_root(const AssembledDesign& d, const std::vector<TermPenalty>& tps, const VectorXd& lambda) {
  MatrixXd B = MatrixXd::Zero(d.p(), d.p());
  for (const auto& tp : tps) {
    MatrixXd S = term_block(d, tp, lambda);
    if (tp.diagonal) {
      B.block(tp.start, tp.start, tp.size, tp.size).diagonal() = S.diagonal().cwiseMax(0.0).cwiseSqrt();
    } else {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
      VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
      B.block(tp.start, tp.start, tp.size, tp.size) = ev.asDiagonal() * es.eigenvectors().transpose();
    }
  }
  return B;
}

}  // namespace detail

/// Sufficient statistics of a (possibly whitened) design, reduced by a QR
/// decomposition X = QR so that ||y - X b||^2 = r2 + ||f - R b||^2.
class PenalizedProblem {
 public:
  explicit PenalizedProblem(const AssembledDesign& design) : design_(&design) {
    Eigen::HouseholderQR<MatrixXd> qr(design.X);
    const Index p = design.p();
    R_ = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
    VectorXd qty = qr.householderQ().transpose() * design.y;
    f_ = qty.head(p);
    r2_ = qty.tail(design.n() - p).squaredNorm();
    yty_ = design.y.squaredNorm();
    XtX_ = R_.transpose() * R_;
    Xty_ = R_.transpose() * f_;
    tps_ = detail::term_penalties(design);
    ridge_mask_ = VectorXd::Zero(design.p());
    for (const auto& t : design.terms)
      if (t.penalized()) ridge_mask_.segment(t.start, t.size).setOnes();
    M_ = design.p();
    for (const auto& tp : tps_) M_ -= tp.rank;
  }

  struct Evaluation {
    double score = std::numeric_limits<double>::infinity();
    VectorXd beta;
    double penalized_deviance = 0.0;
    double log_det_H = 0.0;
    double log_det_S = 0.0;
    bool ok = false;
  };

  const AssembledDesign& design() const { return *design_; }
  Index n_lambda() const { return static_cast<Index>(design_->penalties.size()); }
  Index unpenalized_dim() const { return M_; }
  const MatrixXd& XtX() const { return XtX_; }
  const MatrixXd& R() const { return R_; }
  const VectorXd& f() const { return f_; }
  double r2() const { return r2_; }
  const std::vector<detail::TermPenalty>& term_penalties() const { return tps_; }
  /// Columns eligible for the last-resort ridge: those of penalized terms.
  const VectorXd& ridge_mask() const { return ridge_mask_; }

  /// Restricted likelihood with the scale profiled out, as a score to minimize:
  /// ((n-M)(log(2 pi Dp/(n-M)) + 1) + log|H| - log|S|_+) / 2.
  Evaluation evaluate(const VectorXd& log_lambda) const {
    const AssembledDesign& d = *design_;
    const VectorXd lambda = log_lambda.array().exp();
    MatrixXd H = XtX_;
    detail::add_penalty(H, d, tps_, lambda);
    Evaluation ev;
    Eigen::LLT<MatrixXd> llt;
    VectorXd dg, s;
    double log_det = 0.0;
    auto factor = [&]() {
      dg = H.diagonal();
      if ((dg.array() <= 0.0).any()) return false;
      s = dg.cwiseSqrt().cwiseInverse();
      llt.compute(s.asDiagonal() * H * s.asDiagonal());
      if (llt.info() != Eigen::Success) return false;
      log_det = dg.array().log().sum();
      for (Index i = 0; i < H.rows(); ++i) {
        const double lii = llt.matrixLLT()(i, i);
        if (!(lii > 1e-9)) return false;
        log_det += 2.0 * std::log(lii);
      }
      return true;
    };
    if (!factor()) {
      H.diagonal() += 1e-10 * H.diagonal().mean() * ridge_mask_;
      if (!factor()) return ev;
    }
    ev.beta = s.asDiagonal() * llt.solve(s.asDiagonal() * Xty_);
    const VectorXd Sb = [&] {
      MatrixXd S = MatrixXd::Zero(d.p(), d.p());
      detail::add_penalty(S, d, tps_, lambda);
      return VectorXd(S * ev.beta);
    }();
    double Dp = r2_ + (f_ - R_ * ev.beta).squaredNorm() + ev.beta.dot(Sb);
    Dp = std::max(Dp, 1e-24 * std::max(yty_, std::numeric_limits<double>::min()));
    const double nm = static_cast<double>(d.n() - M_);
    ev.penalized_deviance = Dp;
    ev.log_det_H = log_det;
    ev.log_det_S = detail::log_det_penalty(d, tps_, lambda);
    ev.score = 0.5 * (nm * (std::log(2.0 * std::numbers::pi * Dp / nm) + 1.0) + ev.log_det_H - ev.log_det_S);
    ev.ok = std::isfinite(ev.score);
    if (!ev.ok) ev.score = std::numeric_limits<double>::infinity();
    return ev;
  }

  double reml(const VectorXd& log_lambda) const { return evaluate(log_lambda).score; }

 private:
  const AssembledDesign* design_;
  MatrixXd R_;
  VectorXd f_;
  double r2_ = 0.0;
  double yty_ = 0.0;
  MatrixXd XtX_;
  VectorXd Xty_;
  std::vector<detail::TermPenalty> tps_;
  VectorXd ridge_mask_;
  Index M_ = 0;
};

/// REML score at the given log smoothing parameters.
inline double reml_score(const AssembledDesign& design, const VectorXd& log_lambdas) {
  PenalizedProblem prob(design);
  if (log_lambdas.size() != prob.n_lambda())
    fail(ErrorKind::Length, "expected " + std::to_string(prob.n_lambda()) + " log smoothing parameters");
  auto ev = prob.evaluate(log_lambdas);
  if (!ev.ok) {
    std::string at;
    for (Index j = 0; j < log_lambdas.size(); ++j) at += (j ? ", " : "") + std::to_string(std::exp(log_lambdas(j)));
    fail(ErrorKind::Numeric, "REML score is not finite at lambda = [" + at + "]");
  }
  return ev.score;
}

struct PlsSolution {
  VectorXd beta;
  MatrixXd Vb_unscaled;  // (X'X + S_lambda)^{-1}
  VectorXd edf;          // per coefficient: diag(Vb_unscaled X'X)
  double rss = 0.0;      // on the (whitened) fitting scale
  bool ridge_added = false;
};

/// Penalized least squares through a column-pivoted QR of the augmented
/// system [R; sqrt(S_lambda)]. If the system is numerically singular a tiny
/// ridge is added once on the columns of penalized terms; unpenalized
/// columns are never ridged, so non-identifiable fixed effects still fail
/// with the offending term named.
inline PlsSolution pls_solve(const PenalizedProblem& prob, const VectorXd& lambda) {
  const AssembledDesign& d = prob.design();
  if (lambda.size() != prob.n_lambda()) fail(ErrorKind::Length, "expected " + std::to_string(prob.n_lambda()) + " smoothing parameters");
  for (Index j = 0; j < lambda.size(); ++j)
    if (!(lambda(j) >= 0.0) || !std::isfinite(lambda(j))) fail(ErrorKind::Domain, "smoothing parameters must be finite and non-negative");
  const Index p = d.p();
  MatrixXd B = detail::penalty_root(d, prob.term_penalties(), lambda);

  PlsSolution sol;
  auto attempt = [&](double ridge) -> bool {
    MatrixXd A(2 * p + (ridge > 0.0 ? p : 0), p);
    A.topRows(p) = prob.R();
    A.middleRows(p, p) = B;
    if (ridge > 0.0) A.bottomRows(p) = (std::sqrt(ridge) * prob.ridge_mask()).asDiagonal();
    VectorXd norms = A.colwise().norm();
    if ((norms.array() <= 0.0).any()) {
      Index bad;
      norms.minCoeff(&bad);
      if (ridge > 0.0) fail(ErrorKind::Rank, "coefficient of term '" + d.terms[d.term_of_column(bad)].label + "' is not identifiable");
      return false;
    }
    VectorXd s = norms.cwiseInverse();
    MatrixXd As = A * s.asDiagonal();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(As);
    qr.setThreshold(1e-11);
    if (qr.rank() < p) {
      if (ridge > 0.0) {
        const Index bad = qr.colsPermutation().indices()(p - 1);
        fail(ErrorKind::Rank, "model matrix is rank deficient in term '" + d.terms[d.term_of_column(bad)].label + "'");
      }
      return false;
    }
    VectorXd rhs = VectorXd::Zero(A.rows());
    rhs.head(p) = prob.f();
    sol.beta = s.asDiagonal() * qr.solve(rhs);
    MatrixXd Ra = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    MatrixXd Rinv = Ra.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(p, p));
    MatrixXd PR = qr.colsPermutation() * Rinv;
    sol.Vb_unscaled = s.asDiagonal() * (PR * PR.transpose()) * s.asDiagonal();
    sol.Vb_unscaled = 0.5 * (sol.Vb_unscaled + sol.Vb_unscaled.transpose()).eval();
    return true;
  };
  if (!attempt(0.0)) {
    const double mean_diag = prob.XtX().diagonal().mean() + (B.transpose() * B).diagonal().mean();
    attempt(1e-10 * mean_diag);
    sol.ridge_added = true;
  }
  sol.edf = (sol.Vb_unscaled * prob.XtX()).diagonal();
  sol.rss = (d.y - d.X * sol.beta).squaredNorm();
  return sol;
}

struct OptimizerOptions {
  double log_lower = std::log(1e-12);
  double log_upper = std::log(1e12);
  int max_evaluations = 0;  // per run; 0 selects 200 * (dimension + 1)
  double score_tol = 1e-8;
  double step_tol = 1e-6;
};

struct OptimizerResult {
  VectorXd log_lambda;
  double score = 0.0;
  int evaluations = 0;
  bool converged = false;
};

namespace detail {

/// Nelder-Mead restricted to a box by projection.
template <class F>
OptimizerResult nelder_mead(F&& f, VectorXd x0, double step, const OptimizerOptions& opt) {
  const Index d = x0.size();
  const int cap = opt.max_evaluations > 0 ? opt.max_evaluations : 200 * static_cast<int>(d + 1);
  auto clamp = [&](VectorXd x) { return VectorXd(x.cwiseMax(opt.log_lower).cwiseMin(opt.log_upper)); };
  OptimizerResult res;
  auto eval = [&](const VectorXd& x) {
    ++res.evaluations;
    return f(x);
  };
  std::vector<VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(clamp(x0));
  for (Index i = 0; i < d; ++i) {
    VectorXd x = pts[0];
    x(i) += (x(i) + step > opt.log_upper) ? -step : step;
    pts.push_back(clamp(x));
  }
  for (const auto& x : pts) vals.push_back(eval(x));
  std::vector<std::size_t> order(pts.size());
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double diameter = 0.0;
    for (const auto& x : pts) diameter = std::max(diameter, (x - pts[best]).cwiseAbs().maxCoeff());
    const double spread = vals[worst] - vals[best];
    if ((spread < opt.score_tol || !std::isfinite(spread)) && diameter < opt.step_tol) {
      res.converged = std::isfinite(vals[best]);
      break;
    }
    if (res.evaluations >= cap) break;
    VectorXd centroid = VectorXd::Zero(d);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);
    VectorXd xr = clamp(centroid + (centroid - pts[worst]));
    const double fr = eval(xr);
    if (fr < vals[best]) {
      VectorXd xe = clamp(centroid + 2.0 * (centroid - pts[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    VectorXd xc = outside ? clamp(centroid + 0.5 * (xr - centroid)) : clamp(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = clamp(pts[best] + 0.5 * (pts[i] - pts[best]));
      vals[i] = eval(pts[i]);
    }
  }
  std::size_t best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.log_lambda = pts[best];
  res.score = vals[best];
  return res;
}

}  // namespace detail

/// Minimizes the REML score over log smoothing parameters. Runs from a
/// neutral start and from both ends of the range, then polishes the best.
inline OptimizerResult optimize_lambdas(const PenalizedProblem& prob, std::optional<VectorXd> init = std::nullopt,
                                        const OptimizerOptions& opt = {}) {
  const Index m = prob.n_lambda();
  OptimizerResult best;
  if (m == 0) {
    best.log_lambda = VectorXd(0);
    best.score = prob.reml(best.log_lambda);
    best.converged = true;
    return best;
  }
  auto f = [&](const VectorXd& x) { return prob.reml(x); };
  std::vector<VectorXd> starts;
  if (init) starts.push_back(*init);
  const double ten5 = 5.0 * std::log(10.0);
  starts.push_back(VectorXd::Zero(m));
  starts.push_back(VectorXd::Constant(m, ten5));
  starts.push_back(VectorXd::Constant(m, -ten5));
  int evaluations = 0;
  best.score = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    auto r = detail::nelder_mead(f, s, 2.0, opt);
    evaluations += r.evaluations;
    if (r.score < best.score || best.log_lambda.size() == 0) best = r;
  }
  auto polished = detail::nelder_mead(f, best.log_lambda, 0.5, opt);
  evaluations += polished.evaluations;
  if (polished.score <= best.score) best = polished;
  else best.converged = polished.converged;
  best.converged = best.converged && polished.converged;
  best.evaluations = evaluations;
  if (!std::isfinite(best.score)) fail(ErrorKind::Rank, "penalized system is singular for every smoothing parameter tried");
  return best;
}

}  // namespace gammkit

#endif  // GAMMKIT_PLS_HPP
