#ifndef GAMMKIT_BASIS_HPP
#define GAMMKIT_BASIS_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammkit/error.hpp"

namespace gammkit {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Covariate values a basis is evaluated at: one row per observation,
/// numeric covariates in term order plus optional factor codes.
struct BasisInput {
  MatrixXd x;
  std::vector<int> level;

  Index rows() const { return x.rows() > 0 ? x.rows() : static_cast<Index>(level.size()); }
};

struct EvalOptions {
  bool allow_extrapolation = false;
};

struct EvalInfo {
  bool extrapolated = false;
};

/// Evaluates a basis at arbitrary covariate values. Blocks keep their map so
/// that evaluation at the training covariates reproduces the stored X.
class BasisMap {
 public:
  virtual ~BasisMap() = default;
  virtual MatrixXd evaluate(const BasisInput& in, const EvalOptions& opt, EvalInfo& info) const = 0;

  MatrixXd evaluate(const BasisInput& in) const {
    EvalInfo info;
    return evaluate(in, EvalOptions{}, info);
  }
};

struct Penalty {
  MatrixXd S;
  std::string label;
};

struct ConstraintRecord {
  std::string kind;  // "sum-to-zero"
  RowVectorXd C;     // constraint row applied to the unconstrained coefficients
};

struct BasisBlock {
  std::string term_label;
  MatrixXd X;
  std::vector<Penalty> penalties;
  std::vector<int> null_dims;  // unpenalized directions, one entry per penalty
  std::optional<ConstraintRecord> constraint;
  std::shared_ptr<const BasisMap> map;
  bool constant_first = false;  // column 0 is the constant function, unpenalized

  Index cols() const { return X.cols(); }
  Index rows() const { return X.rows(); }
  int null_dim() const { return null_dims.empty() ? static_cast<int>(X.cols()) : null_dims.front(); }
};

enum class KnotPlacement { Quantile, Even };

struct KnotSet {
  VectorXd locations;
  KnotPlacement placement = KnotPlacement::Quantile;

  Index size() const { return locations.size(); }
};

namespace detail {

inline MatrixXd column_matrix(std::span<const double> x) {
  MatrixXd m(static_cast<Index>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) m(static_cast<Index>(i), 0) = x[i];
  return m;
}

inline std::vector<double> distinct_sorted(std::span<const double> x) {
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

/// Numerical rank of a symmetric positive semidefinite matrix.
inline int psd_rank(const MatrixXd& S, double rel_tol = 1e-9) {
  if (S.size() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  if (top == 0.0) return 0;
  return static_cast<int>((es.eigenvalues().array() > rel_tol * top).count());
}

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline MatrixXd row_kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index l = 0; l < b.cols(); ++l) out.col(j * b.cols() + l) = a.col(j).cwiseProduct(b.col(l));
  return out;
}

// ---------------------------------------------------------------------------
// Maps

class PolyMap final : public BasisMap {
 public:
  PolyMap(std::vector<double> alpha, std::vector<double> norm2) : alpha_(std::move(alpha)), norm2_(std::move(norm2)) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions&, EvalInfo&) const override {
    const Index n = in.x.rows();
    const Index degree = static_cast<Index>(alpha_.size());
    MatrixXd P(n, degree + 1);
    P.col(0).setOnes();
    for (Index j = 0; j < degree; ++j) {
      VectorXd next = (in.x.col(0).array() - alpha_[static_cast<std::size_t>(j)]).matrix().cwiseProduct(P.col(j));
      if (j > 0)
        next -= (norm2_[static_cast<std::size_t>(j)] / norm2_[static_cast<std::size_t>(j - 1)]) * P.col(j - 1);
      P.col(j + 1) = next;
    }
    MatrixXd out(n, degree);
    for (Index j = 0; j < degree; ++j) out.col(j) = P.col(j + 1) / std::sqrt(norm2_[static_cast<std::size_t>(j + 1)]);
    return out;
  }

 private:
  std::vector<double> alpha_;
  std::vector<double> norm2_;  // squared norms of p_0 .. p_degree on the training points
};

/// Cardinal natural cubic spline: coefficients are function values at the
/// knots, second derivatives follow from F = B^{-1} D (zero at both ends).
class CrMap final : public BasisMap {
 public:
  CrMap(VectorXd knots, MatrixXd F) : knots_(std::move(knots)), F_(std::move(F)) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions& opt, EvalInfo& info) const override {
    const Index n = in.x.rows();
    const Index k = knots_.size();
    MatrixXd X = MatrixXd::Zero(n, k);
    const double lo = knots_(0), hi = knots_(k - 1);
    const double span_tol = 1e-12 * std::max(1.0, hi - lo);
    for (Index i = 0; i < n; ++i) {
      double x = in.x(i, 0);
      if (x < lo - span_tol || x > hi + span_tol) {
        if (!opt.allow_extrapolation)
          fail(ErrorKind::Extrapolation, "value " + std::to_string(x) + " outside knot range [" + std::to_string(lo) +
                                             ", " + std::to_string(hi) + "]");
        info.extrapolated = true;
        const bool left = x < lo;
        const double edge = left ? lo : hi;
        X.row(i) = value_row(edge) + (x - edge) * slope_row(left);
        continue;
      }
      X.row(i) = value_row(std::clamp(x, lo, hi));
    }
    return X;
  }

 private:
  Index interval(double x) const {
    const Index k = knots_.size();
    auto it = std::upper_bound(knots_.data(), knots_.data() + k, x);
    Index j = static_cast<Index>(it - knots_.data()) - 1;
    return std::clamp<Index>(j, 0, k - 2);
  }

  RowVectorXd value_row(double x) const {
    const Index j = interval(x);
    const double h = knots_(j + 1) - knots_(j);
    const double am = (knots_(j + 1) - x) / h;
    const double ap = (x - knots_(j)) / h;
    const double dm = knots_(j + 1) - x;
    const double dp = x - knots_(j);
    const double cm = (dm * dm * dm / h - h * dm) / 6.0;
    const double cp = (dp * dp * dp / h - h * dp) / 6.0;
    RowVectorXd row = cm * F_.row(j) + cp * F_.row(j + 1);
    row(j) += am;
    row(j + 1) += ap;
    return row;
  }

  // First derivative at the left or right boundary knot.
  RowVectorXd slope_row(bool left) const {
    const Index k = knots_.size();
    RowVectorXd row;
    if (left) {
      const double h = knots_(1) - knots_(0);
      row = -h / 6.0 * (2.0 * F_.row(0) + F_.row(1));
      row(0) -= 1.0 / h;
      row(1) += 1.0 / h;
    } else {
      const double h = knots_(k - 1) - knots_(k - 2);
      row = h / 6.0 * (F_.row(k - 2) + 2.0 * F_.row(k - 1));
      row(k - 2) -= 1.0 / h;
      row(k - 1) += 1.0 / h;
    }
    return row;
  }

  VectorXd knots_;
  MatrixXd F_;  // k x k, maps knot values to knot second derivatives
};

inline double tp_kernel(double r, int d) {
  if (d == 1) return r * r * r / 12.0;
  if (r <= 0.0) return 0.0;
  return r * r * std::log(r) / (8.0 * M_PI);
}

/// Thin plate regression spline: radial part e(x)^T * radial, followed by the
/// polynomial null space [1, x (, z)], then a final column transform.
class TpMap final : public BasisMap {
 public:
  TpMap(MatrixXd knots, MatrixXd radial, MatrixXd transform)
      : knots_(std::move(knots)), radial_(std::move(radial)), transform_(std::move(transform)) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions&, EvalInfo&) const override {
    return raw(in.x) * transform_;
  }

  /// Columns [1, covariates..., radial part] before the final transform.
  MatrixXd raw(const MatrixXd& x) const {
    const Index n = x.rows();
    const Index d = knots_.cols();
    const Index nk = knots_.rows();
    MatrixXd E(n, nk);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < nk; ++j)
        E(i, j) = tp_kernel((x.row(i) - knots_.row(j)).norm(), static_cast<int>(d));
    MatrixXd out(n, 1 + d + radial_.cols());
    out.col(0).setOnes();
    out.middleCols(1, d) = x.leftCols(d);
    out.rightCols(radial_.cols()) = E * radial_;
    return out;
  }

 private:
  MatrixXd knots_;
  MatrixXd radial_;
  MatrixXd transform_;
};

/// inner(x) * T - shift, with the shift applied only on rows of `level`
/// when a level restriction is set (zero elsewhere).
class LinearMap final : public BasisMap {
 public:
  LinearMap(std::shared_ptr<const BasisMap> inner, MatrixXd T, RowVectorXd shift)
      : inner_(std::move(inner)), T_(std::move(T)), shift_(std::move(shift)) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions& opt, EvalInfo& info) const override {
    MatrixXd X = inner_->evaluate(in, opt, info) * T_;
    if (shift_.size() > 0) X.rowwise() -= shift_;
    return X;
  }

 private:
  std::shared_ptr<const BasisMap> inner_;
  MatrixXd T_;
  RowVectorXd shift_;
};

/// Per-level copies of an inner basis; level l occupies columns
/// [l*p, (l+1)*p) and is zero on rows of other levels. Optional per-level
/// shifts are subtracted on the level's own rows.
class ByLevelMap final : public BasisMap {
 public:
  ByLevelMap(std::shared_ptr<const BasisMap> inner, Index n_levels, Index p, std::vector<RowVectorXd> shifts = {})
      : inner_(std::move(inner)), n_levels_(n_levels), p_(p), shifts_(std::move(shifts)) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions& opt, EvalInfo& info) const override {
    MatrixXd base = inner_->evaluate(in, opt, info);
    MatrixXd X = MatrixXd::Zero(base.rows(), n_levels_ * p_);
    for (Index i = 0; i < base.rows(); ++i) {
      const Index l = in.level.at(static_cast<std::size_t>(i));
      if (l < 0 || l >= n_levels_) fail(ErrorKind::Level, "level index out of range");
      RowVectorXd row = base.row(i);
      if (!shifts_.empty()) row -= shifts_[static_cast<std::size_t>(l)];
      X.block(i, l * p_, 1, p_) = row;
    }
    return X;
  }

 private:
  std::shared_ptr<const BasisMap> inner_;
  Index n_levels_;
  Index p_;
  std::vector<RowVectorXd> shifts_;
};

class TensorMap final : public BasisMap {
 public:
  TensorMap(std::shared_ptr<const BasisMap> a, std::shared_ptr<const BasisMap> b, Index dims_a)
      : a_(std::move(a)), b_(std::move(b)), dims_a_(dims_a) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions& opt, EvalInfo& info) const override {
    BasisInput ia{in.x.leftCols(dims_a_), in.level};
    BasisInput ib{in.x.rightCols(in.x.cols() - dims_a_), in.level};
    return row_kron(a_->evaluate(ia, opt, info), b_->evaluate(ib, opt, info));
  }

 private:
  std::shared_ptr<const BasisMap> a_;
  std::shared_ptr<const BasisMap> b_;
  Index dims_a_;
};

class RandomEffectMap final : public BasisMap {
 public:
  RandomEffectMap(Index n_levels, bool slope) : n_levels_(n_levels), slope_(slope) {}

  MatrixXd evaluate(const BasisInput& in, const EvalOptions&, EvalInfo&) const override {
    const Index n = static_cast<Index>(in.level.size());
    MatrixXd X = MatrixXd::Zero(n, n_levels_);
    for (Index i = 0; i < n; ++i) {
      const Index l = in.level[static_cast<std::size_t>(i)];
      if (l < 0 || l >= n_levels_) fail(ErrorKind::Level, "level index out of range");
      X(i, l) = slope_ ? in.x(i, 0) : 1.0;
    }
    return X;
  }

 private:
  Index n_levels_;
  bool slope_;
};

inline void check_finite(const MatrixXd& X, const std::string& label) {
  if (!X.allFinite()) fail(ErrorKind::Numeric, "non-finite basis values in " + label);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

/// Orthonormal polynomial basis (constant excluded) via the three-term
/// recurrence on the observed points; unpenalized.
inline BasisBlock poly_basis(std::span<const double> x, int degree) {
  if (degree < 1) fail(ErrorKind::Dimension, "polynomial degree must be >= 1");
  const auto distinct = detail::distinct_sorted(x);
  if (static_cast<std::size_t>(degree) >= distinct.size())
    fail(ErrorKind::Rank, "degree " + std::to_string(degree) + " needs more than " + std::to_string(distinct.size()) +
                              " distinct values");
  const Index n = static_cast<Index>(x.size());
  VectorXd xv = detail::column_matrix(x).col(0);
  std::vector<double> alpha, norm2;
  VectorXd prev = VectorXd::Zero(n);
  VectorXd cur = VectorXd::Ones(n);
  norm2.push_back(cur.squaredNorm());
  for (int j = 0; j < degree; ++j) {
    const double a = xv.cwiseProduct(cur).dot(cur) / norm2.back();
    alpha.push_back(a);
    VectorXd next = (xv.array() - a).matrix().cwiseProduct(cur);
    if (j > 0) next -= (norm2[static_cast<std::size_t>(j)] / norm2[static_cast<std::size_t>(j - 1)]) * prev;
    prev = cur;
    cur = next;
    norm2.push_back(cur.squaredNorm());
  }
  BasisBlock block;
  block.term_label = "poly(" + std::to_string(degree) + ")";
  block.map = std::make_shared<detail::PolyMap>(alpha, norm2);
  block.X = block.map->evaluate(BasisInput{detail::column_matrix(x), {}});
  block.penalties.push_back({MatrixXd::Zero(degree, degree), "none"});
  block.null_dims.push_back(degree);
  detail::check_finite(block.X, block.term_label);
  return block;
}

/// k knots at evenly spaced empirical quantiles of the distinct values.
inline KnotSet knots_quantile(std::span<const double> x, int k) {
  if (k < 3) fail(ErrorKind::Dimension, "need at least 3 knots");
  const auto u = detail::distinct_sorted(x);
  if (u.size() < static_cast<std::size_t>(k))
    fail(ErrorKind::Rank, std::to_string(u.size()) + " distinct values for " + std::to_string(k) + " knots");
  KnotSet ks;
  ks.locations.resize(k);
  const double last = static_cast<double>(u.size() - 1);
  for (int j = 0; j < k; ++j) {
    const double pos = last * j / (k - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, u.size() - 1);
    const double w = pos - static_cast<double>(lo);
    ks.locations(j) = (1.0 - w) * u[lo] + w * u[hi];
  }
  ks.locations(0) = u.front();
  ks.locations(k - 1) = u.back();
  return ks;
}

inline KnotSet knots_even(std::span<const double> x, int k) {
  if (k < 3) fail(ErrorKind::Dimension, "need at least 3 knots");
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo)) fail(ErrorKind::Rank, "constant covariate");
  KnotSet ks;
  ks.placement = KnotPlacement::Even;
  ks.locations = VectorXd::LinSpaced(k, *lo, *hi);
  return ks;
}

/// Cubic regression spline in cardinal form with the exact integrated
/// squared second derivative penalty S = D^T B^{-1} D.
inline BasisBlock cr_basis(std::span<const double> x, const KnotSet& knots) {
  const Index k = knots.size();
  if (k < 3) fail(ErrorKind::Dimension, "cubic regression spline needs at least 3 knots");
  const VectorXd& t = knots.locations;
  for (Index j = 1; j < k; ++j)
    if (!(t(j) > t(j - 1))) fail(ErrorKind::Spec, "knots must be strictly increasing");
  VectorXd h = t.tail(k - 1) - t.head(k - 1);
  MatrixXd D = MatrixXd::Zero(k - 2, k);
  MatrixXd B = MatrixXd::Zero(k - 2, k - 2);
  for (Index i = 0; i < k - 2; ++i) {
    D(i, i) = 1.0 / h(i);
    D(i, i + 1) = -1.0 / h(i) - 1.0 / h(i + 1);
    D(i, i + 2) = 1.0 / h(i + 1);
    B(i, i) = (h(i) + h(i + 1)) / 3.0;
    if (i + 1 < k - 2) {
      B(i, i + 1) = h(i + 1) / 6.0;
      B(i + 1, i) = h(i + 1) / 6.0;
    }
  }
  Eigen::LDLT<MatrixXd> bl(B);
  MatrixXd Finner = bl.solve(D);
  MatrixXd F = MatrixXd::Zero(k, k);
  F.middleRows(1, k - 2) = Finner;
  MatrixXd S = D.transpose() * Finner;
  S = 0.5 * (S + S.transpose());

  BasisBlock block;
  block.term_label = "cr";
  block.map = std::make_shared<detail::CrMap>(t, F);
  block.X = block.map->evaluate(BasisInput{detail::column_matrix(x), {}});
  block.penalties.push_back({S, "wiggliness"});
  block.null_dims.push_back(2);
  detail::check_finite(block.X, "cr");
  return block;
}

struct TpOptions {
  std::size_t max_knots = 2000;
  std::uint64_t seed = 1;
};

/// Thin plate regression spline (penalty order 2, d in {1, 2}). Columns are
/// [1, covariates, wiggly...] with a diagonal penalty whose wiggly
/// eigenvalues increase along the columns.
inline BasisBlock tp_basis(const MatrixXd& cov, int k, int m = 2, TpOptions opt = {}) {
  const Index d = cov.cols();
  if (d < 1 || d > 2) fail(ErrorKind::Dimension, "thin plate smooths support 1 or 2 covariates");
  if (m != 2) fail(ErrorKind::Dimension, "only penalty order m = 2 is supported");
  const Index M = d + 1;
  if (k <= M) fail(ErrorKind::Dimension, "k = " + std::to_string(k) + " must exceed null space dimension " + std::to_string(M));

  std::vector<Index> order(static_cast<std::size_t>(cov.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](Index a, Index b) {
    for (Index j = 0; j < d; ++j)
      if (cov(a, j) != cov(b, j)) return cov(a, j) < cov(b, j);
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<Index> unique_rows;
  for (Index r : order)
    if (unique_rows.empty() || row_less(unique_rows.back(), r)) unique_rows.push_back(r);
  if (unique_rows.size() < static_cast<std::size_t>(k))
    fail(ErrorKind::Rank, std::to_string(unique_rows.size()) + " distinct covariate points for k = " + std::to_string(k));
  if (unique_rows.size() > opt.max_knots) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(unique_rows.begin(), unique_rows.end(), rng);
    unique_rows.resize(opt.max_knots);
    std::sort(unique_rows.begin(), unique_rows.end(), row_less);
  }
  const Index nk = static_cast<Index>(unique_rows.size());
  MatrixXd knots(nk, d);
  for (Index i = 0; i < nk; ++i) knots.row(i) = cov.row(unique_rows[static_cast<std::size_t>(i)]);

  MatrixXd E(nk, nk);
  for (Index i = 0; i < nk; ++i)
    for (Index j = 0; j < nk; ++j) E(i, j) = detail::tp_kernel((knots.row(i) - knots.row(j)).norm(), static_cast<int>(d));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(E);
  std::vector<Index> idx(static_cast<std::size_t>(nk));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
  });
  MatrixXd Uk(nk, k);
  VectorXd Dk(k);
  for (Index j = 0; j < k; ++j) {
    Uk.col(j) = es.eigenvectors().col(idx[static_cast<std::size_t>(j)]);
    Dk(j) = es.eigenvalues()(idx[static_cast<std::size_t>(j)]);
  }

  MatrixXd T(nk, M);
  T.col(0).setOnes();
  T.rightCols(d) = knots;
  // Constraint T^T Uk delta = 0, absorbed through the QR factorization of Uk^T T.
  Eigen::HouseholderQR<MatrixXd> qr(Uk.transpose() * T);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(k, k);
  MatrixXd Z = Q.rightCols(k - M);
  MatrixXd P = Z.transpose() * Dk.asDiagonal() * Z;
  P = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> pe(P);
  const double top = pe.eigenvalues().cwiseAbs().maxCoeff();
  if (pe.eigenvalues().minCoeff() < -1e-8 * top) fail(ErrorKind::Numeric, "thin plate penalty is not positive semidefinite");
  MatrixXd radial = Uk * Z * pe.eigenvectors();

  auto map = std::make_shared<detail::TpMap>(knots, radial, MatrixXd::Identity(M + k - M, k));
  BasisBlock block;
  block.term_label = "tp";
  block.map = map;
  block.X = map->raw(cov);
  VectorXd diag = VectorXd::Zero(k);
  diag.tail(k - M) = pe.eigenvalues().cwiseMax(0.0);
  block.penalties.push_back({MatrixXd(diag.asDiagonal()), "wiggliness"});
  block.null_dims.push_back(static_cast<int>(M));
  block.constant_first = true;
  detail::check_finite(block.X, "tp");
  return block;
}

inline BasisBlock tp_basis(std::span<const double> x, int k, int m = 2, TpOptions opt = {}) {
  return tp_basis(detail::column_matrix(x), k, m, opt);
}

/// Reparameterizes a single-penalty block so that the penalty is diagonal:
/// [constant (if representable), remaining null-space directions scaled to
/// unit RMS on the data, wiggly eigen-directions in increasing penalty].
inline BasisBlock natural_form(const BasisBlock& block) {
  if (block.penalties.size() != 1) fail(ErrorKind::Spec, "natural form needs a single-penalty block");
  const Index p = block.cols();
  const Index n = block.rows();
  MatrixXd S = block.penalties.front().S;
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  Index nd = 0;
  for (Index j = 0; j < p; ++j)
    if (top == 0.0 || es.eigenvalues()(j) <= 1e-9 * top) ++nd;
  MatrixXd N = es.eigenvectors().leftCols(nd);
  MatrixXd W = es.eigenvectors().rightCols(p - nd);

  MatrixXd Tnull(p, 0);
  bool constant = false;
  if (nd > 0) {
    MatrixXd G = block.X * N;
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(G);
    VectorXd a = cod.solve(VectorXd::Ones(n));
    constant = (G * a - VectorXd::Ones(n)).norm() < 1e-7 * std::sqrt(static_cast<double>(n));
    MatrixXd Gc = G;
    if (constant) Gc.rowwise() -= G.colwise().mean();
    Eigen::JacobiSVD<MatrixXd> svd(Gc, Eigen::ComputeThinV);
    const Index keep = constant ? nd - 1 : nd;
    MatrixXd rest(p, keep);
    for (Index j = 0; j < keep; ++j) {
      const double sv = svd.singularValues()(j);
      if (!(sv > 1e-10 * std::sqrt(static_cast<double>(n))))
        fail(ErrorKind::Rank, "null space direction not identifiable from the data");
      rest.col(j) = N * svd.matrixV().col(j) * (std::sqrt(static_cast<double>(n)) / sv);
    }
    Tnull.resize(p, (constant ? 1 : 0) + keep);
    if (constant) Tnull.col(0) = N * a;
    Tnull.rightCols(keep) = rest;
  }
  // Deterministic signs: last training row above the first.
  if (block.X.rows() > 1) {
    for (Index j = constant ? 1 : 0; j < Tnull.cols(); ++j) {
      VectorXd col = block.X * Tnull.col(j);
      if (col(col.size() - 1) < col(0)) Tnull.col(j) = -Tnull.col(j);
    }
  }

  MatrixXd T(p, Tnull.cols() + W.cols());
  T << Tnull, W;
  BasisBlock out;
  out.term_label = block.term_label;
  out.map = std::make_shared<detail::LinearMap>(block.map, T, RowVectorXd());
  out.X = block.X * T;
  VectorXd diag = VectorXd::Zero(p);
  diag.tail(p - nd) = es.eigenvalues().tail(p - nd);
  out.penalties.push_back({MatrixXd(diag.asDiagonal()), block.penalties.front().label});
  out.null_dims.push_back(static_cast<int>(nd));
  out.constant_first = constant;
  return out;
}

/// Shifts every non-constant column to mean zero on the training rows.
/// The function space together with an intercept is unchanged.
inline BasisBlock center_columns(const BasisBlock& block, bool skip_first) {
  RowVectorXd shift = block.X.colwise().mean();
  if (skip_first) shift(0) = 0.0;
  BasisBlock out = block;
  out.map = std::make_shared<detail::LinearMap>(block.map, MatrixXd::Identity(block.cols(), block.cols()), shift);
  out.X.rowwise() -= shift;
  return out;
}

/// Sum-to-zero identifiability constraint sum_i f(x_i) = 0 absorbed by
/// reparameterization. Blocks whose column 0 is the unpenalized constant
/// drop it and centre the rest; otherwise the null space of the constraint
/// row is taken from a Householder QR and penalties transform as Z^T S Z.
inline BasisBlock absorb_constraints(const BasisBlock& block) {
  if (block.constraint) fail(ErrorKind::Spec, "block '" + block.term_label + "' is already constrained");
  const Index p = block.cols();
  if (p < 2) fail(ErrorKind::Numeric, "cannot constrain a single-column block");
  RowVectorXd C = block.X.colwise().sum();
  BasisBlock out;
  out.term_label = block.term_label;
  out.constraint = ConstraintRecord{"sum-to-zero", C};

  bool fast = block.constant_first;
  for (const auto& pen : block.penalties)
    fast = fast && pen.S.row(0).cwiseAbs().maxCoeff() == 0.0 && pen.S.col(0).cwiseAbs().maxCoeff() == 0.0;
  if (fast) {
    MatrixXd T = MatrixXd::Identity(p, p).rightCols(p - 1);
    MatrixXd Xd = block.X.rightCols(p - 1);
    RowVectorXd shift = Xd.colwise().mean();
    out.map = std::make_shared<detail::LinearMap>(block.map, T, shift);
    out.X = Xd.rowwise() - shift;
    for (std::size_t j = 0; j < block.penalties.size(); ++j) {
      out.penalties.push_back({block.penalties[j].S.bottomRightCorner(p - 1, p - 1), block.penalties[j].label});
      out.null_dims.push_back(std::max(0, block.null_dims[j] - 1));
    }
    return out;
  }

  if (C.norm() <= 1e-10 * std::max(1.0, block.X.norm()))
    fail(ErrorKind::Numeric, "constraint row vanishes for '" + block.term_label + "'");
  Eigen::HouseholderQR<MatrixXd> qr(C.transpose());
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(p, p);
  MatrixXd Z = Q.rightCols(p - 1);
  out.map = std::make_shared<detail::LinearMap>(block.map, Z, RowVectorXd());
  out.X = block.X * Z;
  for (std::size_t j = 0; j < block.penalties.size(); ++j) {
    MatrixXd S = Z.transpose() * block.penalties[j].S * Z;
    S = 0.5 * (S + S.transpose());
    out.penalties.push_back({S, block.penalties[j].label});
    out.null_dims.push_back(static_cast<int>(p - 1) - detail::psd_rank(S));
  }
  return out;
}

/// Row-wise Kronecker product of two single-penalty marginals with penalties
/// S_A (x) I and I (x) S_B. With interaction_only the marginals are put in
/// natural form and constrained first, so the product excludes the main
/// effects of either covariate.
inline BasisBlock tensor_product(const BasisBlock& a_in, const BasisBlock& b_in, bool interaction_only,
                                 Index dims_a = 1) {
  if (a_in.rows() != b_in.rows())
    fail(ErrorKind::Shape, "marginals have " + std::to_string(a_in.rows()) + " and " + std::to_string(b_in.rows()) + " rows");
  if (a_in.penalties.size() > 1 || b_in.penalties.size() > 1)
    fail(ErrorKind::Spec, "tensor marginals must carry a single penalty");
  BasisBlock a = a_in, b = b_in;
  if (interaction_only) {
    a = a.constraint ? a : center_columns(absorb_constraints(natural_form(a)), false);
    b = b.constraint ? b : center_columns(absorb_constraints(natural_form(b)), false);
  }
  const Index pa = a.cols(), pb = b.cols();
  auto penalty_of = [](const BasisBlock& blk) {
    return blk.penalties.empty() ? MatrixXd(MatrixXd::Zero(blk.cols(), blk.cols())) : blk.penalties.front().S;
  };
  BasisBlock out;
  out.term_label = (interaction_only ? "ti(" : "te(") + a.term_label + "," + b.term_label + ")";
  out.X = detail::row_kron(a.X, b.X);
  out.map = std::make_shared<detail::TensorMap>(a.map, b.map, dims_a);
  MatrixXd SA = detail::kron(penalty_of(a), MatrixXd::Identity(pb, pb));
  MatrixXd SB = detail::kron(MatrixXd::Identity(pa, pa), penalty_of(b));
  out.null_dims.push_back(static_cast<int>(pa * pb) - detail::psd_rank(SA));
  out.null_dims.push_back(static_cast<int>(pa * pb) - detail::psd_rank(SB));
  out.penalties.push_back({SA, "margin 1"});
  out.penalties.push_back({SB, "margin 2"});
  out.constant_first = a.constant_first && b.constant_first;
  if (interaction_only) out.constraint = ConstraintRecord{"marginal sum-to-zero", RowVectorXd()};
  return out;
}

namespace detail {
inline std::vector<Index> level_counts(const std::vector<int>& codes, Index n_levels) {
  std::vector<Index> counts(static_cast<std::size_t>(n_levels), 0);
  for (int c : codes) ++counts.at(static_cast<std::size_t>(c));
  return counts;
}
}  // namespace detail

/// One copy of the block per factor level, zero off-level, each level with
/// its own copy of every penalty. With `constrain`, the block must be in
/// natural form: its constant column is dropped and each level's copy is
/// centred over that level's rows.
inline BasisBlock apply_by_factor(const BasisBlock& block, const std::vector<int>& codes, Index n_levels,
                                  bool constrain = false) {
  if (static_cast<Index>(codes.size()) != block.rows()) fail(ErrorKind::Shape, "factor not aligned with block rows");
  const auto counts = detail::level_counts(codes, n_levels);
  for (Index l = 0; l < n_levels; ++l)
    if (counts[static_cast<std::size_t>(l)] < block.null_dim())
      fail(ErrorKind::InsufficientData, "level " + std::to_string(l) + " has " + std::to_string(counts[static_cast<std::size_t>(l)]) +
                                            " rows for a null space of dimension " + std::to_string(block.null_dim()));
  BasisBlock base = block;
  std::vector<RowVectorXd> shifts;
  int null_adjust = 0;
  if (constrain) {
    if (!block.constant_first) fail(ErrorKind::Spec, "constrained by-factor smooths need a natural-form block");
    const Index p = block.cols();
    base.X = block.X.rightCols(p - 1);
    base.map = std::make_shared<detail::LinearMap>(block.map, MatrixXd::Identity(p, p).rightCols(p - 1), RowVectorXd());
    for (auto& pen : base.penalties) pen.S = MatrixXd(pen.S.bottomRightCorner(p - 1, p - 1));
    null_adjust = 1;
    for (Index l = 0; l < n_levels; ++l) {
      RowVectorXd sum = RowVectorXd::Zero(p - 1);
      for (Index i = 0; i < base.rows(); ++i)
        if (codes[static_cast<std::size_t>(i)] == l) sum += base.X.row(i);
      shifts.push_back(sum / static_cast<double>(std::max<Index>(1, counts[static_cast<std::size_t>(l)])));
    }
  }
  const Index p = base.cols();
  BasisBlock out;
  out.term_label = block.term_label;
  out.map = std::make_shared<detail::ByLevelMap>(base.map, n_levels, p, shifts);
  out.X = MatrixXd::Zero(base.rows(), n_levels * p);
  for (Index i = 0; i < base.rows(); ++i) {
    const Index l = codes[static_cast<std::size_t>(i)];
    RowVectorXd row = base.X.row(i);
    if (constrain) row -= shifts[static_cast<std::size_t>(l)];
    out.X.block(i, l * p, 1, p) = row;
  }
  for (Index l = 0; l < n_levels; ++l) {
    for (std::size_t j = 0; j < base.penalties.size(); ++j) {
      MatrixXd S = MatrixXd::Zero(n_levels * p, n_levels * p);
      S.block(l * p, l * p, p, p) = base.penalties[j].S;
      out.penalties.push_back({S, "level " + std::to_string(l)});
      out.null_dims.push_back(static_cast<int>((n_levels - 1) * p) + std::max(0, block.null_dims[j] - null_adjust));
    }
  }
  if (constrain) out.constraint = ConstraintRecord{"sum-to-zero within level", RowVectorXd()};
  return out;
}

/// Factor smooth: per-level copies sharing two penalties, the wiggliness
/// penalty replicated block-diagonally and a ridge on every null-space
/// direction (per-level intercepts included). Nothing is left unpenalized.
inline BasisBlock factor_smooth(const BasisBlock& block, const std::vector<int>& codes, Index n_levels) {
  if (block.penalties.size() != 1) fail(ErrorKind::Spec, "factor smooths need a single-penalty univariate smooth");
  if (static_cast<Index>(codes.size()) != block.rows()) fail(ErrorKind::Shape, "factor not aligned with block rows");
  const auto counts = detail::level_counts(codes, n_levels);
  for (Index l = 0; l < n_levels; ++l)
    if (counts[static_cast<std::size_t>(l)] < 1)
      fail(ErrorKind::InsufficientData, "level " + std::to_string(l) + " has no rows");
  BasisBlock nat = natural_form(block);
  const Index p = nat.cols();
  const VectorXd d = nat.penalties.front().S.diagonal();
  VectorXd wiggle(n_levels * p), ridge(n_levels * p);
  for (Index l = 0; l < n_levels; ++l) {
    wiggle.segment(l * p, p) = d;
    for (Index j = 0; j < p; ++j) ridge(l * p + j) = d(j) == 0.0 ? 1.0 : 0.0;
  }
  BasisBlock out;
  out.term_label = "fs";
  out.map = std::make_shared<detail::ByLevelMap>(nat.map, n_levels, p);
  out.X = MatrixXd::Zero(nat.rows(), n_levels * p);
  for (Index i = 0; i < nat.rows(); ++i) out.X.block(i, codes[static_cast<std::size_t>(i)] * p, 1, p) = nat.X.row(i);
  out.penalties.push_back({MatrixXd(wiggle.asDiagonal()), "wiggliness"});
  out.penalties.push_back({MatrixXd(ridge.asDiagonal()), "null space"});
  out.null_dims = {static_cast<int>((ridge.array() > 0.0).count()), static_cast<int>((wiggle.array() > 0.0).count())};
  return out;
}

/// Ridge-penalized indicator columns, optionally multiplied by a covariate
/// (random slopes).
inline BasisBlock random_effect(const std::vector<int>& codes, Index n_levels,
                                std::optional<std::span<const double>> covariate = std::nullopt) {
  if (n_levels < 2) fail(ErrorKind::Degenerate, "random effect factor needs at least 2 levels");
  BasisInput in;
  in.level = codes;
  if (covariate) {
    if (covariate->size() != codes.size()) fail(ErrorKind::Shape, "covariate not aligned with factor");
    in.x = detail::column_matrix(*covariate);
  }
  BasisBlock block;
  block.term_label = "re";
  block.map = std::make_shared<detail::RandomEffectMap>(n_levels, covariate.has_value());
  block.X = block.map->evaluate(in);
  block.penalties.push_back({MatrixXd::Identity(n_levels, n_levels), "ridge"});
  block.null_dims.push_back(0);
  return block;
}

}  // namespace gammkit

#endif  // GAMMKIT_BASIS_HPP
