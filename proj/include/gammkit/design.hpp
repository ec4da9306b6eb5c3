#ifndef GAMMKIT_DESIGN_HPP
#define GAMMKIT_DESIGN_HPP

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammkit/basis.hpp"
#include "gammkit/data.hpp"
#include "gammkit/error.hpp"
#include "gammkit/model.hpp"

namespace gammkit {

enum class TermKind { Intercept, Parametric, Smooth, Random };

/// Evaluates a term's columns on any table holding the term's covariates.
using TermEvaluator = std::function<MatrixXd(const DataTable&, const EvalOptions&, EvalInfo&)>;

struct DesignTerm {
  std::string label;
  TermKind kind = TermKind::Smooth;
  Index start = 0;
  Index size = 0;
  std::vector<std::size_t> penalties;     // indices into AssembledDesign::penalties
  std::vector<std::string> covariates;    // numeric covariates, in basis order
  std::optional<std::string> factor;      // by / fs / re grouping factor
  std::optional<std::string> level;       // by-factor level this term belongs to
  std::vector<std::string> column_names;  // parametric terms only
  TermEvaluator evaluate;

  bool penalized() const { return !penalties.empty(); }
};

/// Penalty on a single term, stored over the term's own columns. `scale`
/// is the factor applied to the basis penalty so that lambda is on a
/// comparable footing across terms: S = scale * S_basis.
struct DesignPenalty {
  std::size_t term = 0;
  MatrixXd S;
  double scale = 1.0;
  std::string label;
  bool diagonal = false;
};

struct AssembledDesign {
  DataTable data;  // rows in model order (sorted by series, then order)
  VectorXd y;
  MatrixXd X;
  std::vector<DesignTerm> terms;
  std::vector<DesignPenalty> penalties;
  std::vector<std::size_t> row_index;  // original row of each model row
  std::vector<int> series;             // series code per row (all zero without a series key)
  std::vector<std::string> series_levels;
  std::vector<double> order;
  double rho = 0.0;  // AR(1) coefficient the design has been whitened with

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
  std::size_t n_series() const { return series_levels.size(); }

  const DesignTerm& term(const std::string& label) const {
    for (const auto& t : terms)
      if (t.label == label) return t;
    fail(ErrorKind::Lookup, "no term '" + label + "'");
  }

  /// Index of the term owning a coefficient.
  std::size_t term_of_column(Index col) const {
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (col >= terms[i].start && col < terms[i].start + terms[i].size) return i;
    fail(ErrorKind::Lookup, "column out of range");
  }

  /// Number of unpenalized coefficients (parametric part plus smooth null spaces).
  Index unpenalized_dim() const;
};

namespace detail {

inline bool is_diagonal(const MatrixXd& S) {
  for (Index j = 0; j < S.cols(); ++j)
    for (Index i = 0; i < S.rows(); ++i)
      if (i != j && S(i, j) != 0.0) return false;
  return true;
}

/// mgcv-style normalization: penalties scaled to the magnitude of X'X.
inline double penalty_scale(const MatrixXd& X, const MatrixXd& S) {
  const double max_row = X.rowwise().lpNorm<1>().maxCoeff();
  const double s1 = S.cwiseAbs().colwise().sum().maxCoeff();
  if (!(s1 > 0.0) || !(max_row > 0.0)) return 1.0;
  return max_row * max_row / s1;
}

inline std::vector<int> map_levels(const FactorColumn& train, const FactorColumn& other, const std::string& name) {
  std::vector<int> lookup(other.levels.size());
  for (std::size_t l = 0; l < other.levels.size(); ++l) {
    auto code = train.code_of(other.levels[l]);
    lookup[l] = code ? *code : -1;
  }
  std::vector<int> codes(other.codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int c = lookup[static_cast<std::size_t>(other.codes[i])];
    if (c < 0) fail(ErrorKind::Level, "level '" + other.label(i) + "' of '" + name + "' was not seen in fitting");
    codes[i] = c;
  }
  return codes;
}

inline MatrixXd covariate_matrix(const DataTable& t, const std::vector<std::string>& names) {
  MatrixXd x(static_cast<Index>(t.n_rows()), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto& v = t.values(names[j]);
    for (std::size_t i = 0; i < v.size(); ++i) x(static_cast<Index>(i), static_cast<Index>(j)) = v[i];
  }
  return x;
}

/// Coded columns of one parametric variable.
struct VariableCoder {
  std::string name;
  bool is_factor = false;
  FactorColumn train;  // levels only
  Coding coding = Coding::Treatment;

  Index width() const { return is_factor ? static_cast<Index>(train.n_levels()) - 1 : 1; }

  std::vector<std::string> names() const {
    if (!is_factor) return {name};
    std::vector<std::string> out;
    for (std::size_t l = 1; l < train.n_levels(); ++l) out.push_back(name + "[" + train.levels[l] + "]");
    return out;
  }

  MatrixXd columns(const DataTable& t) const {
    const Index n = static_cast<Index>(t.n_rows());
    if (!is_factor) {
      const auto& v = t.values(name);
      return Eigen::Map<const VectorXd>(v.data(), n);
    }
    const auto codes = map_levels(train, t.factor(name), name);
    const Index L = static_cast<Index>(train.n_levels());
    MatrixXd X = MatrixXd::Zero(n, L - 1);
    for (Index i = 0; i < n; ++i) {
      const Index c = codes[static_cast<std::size_t>(i)];
      if (coding == Coding::Treatment) {
        if (c > 0) X(i, c - 1) = 1.0;
      } else if (L == 2) {
        X(i, 0) = c == 0 ? -0.5 : 0.5;
      } else if (c == 0) {
        X.row(i).setConstant(-1.0);
      } else {
        X(i, c - 1) = 1.0;
      }
    }
    return X;
  }
};

inline std::vector<std::size_t> model_order(const DataTable& data, const ModelSpec& spec) {
  std::vector<std::size_t> idx(data.n_rows());
  std::iota(idx.begin(), idx.end(), 0);
  if (!spec.series_key) return idx;
  const auto& s = data.factor(*spec.series_key).codes;
  const auto& o = data.values(*spec.order_key);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s[a] != s[b] ? s[a] < s[b] : o[a] < o[b];
  });
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (s[idx[i]] == s[idx[i - 1]] && o[idx[i]] == o[idx[i - 1]])
      fail(ErrorKind::Ordering, "duplicate order value within series '" + data.factor(*spec.series_key).label(idx[i]) + "'");
  return idx;
}

inline BasisBlock marginal(BasisKind kind, std::span<const double> x, int k, const std::string& name) {
  BasisBlock b = kind == BasisKind::Cr ? cr_basis(x, knots_quantile(x, k)) : tp_basis(x, k);
  b.term_label = name;
  return b;
}

inline BasisBlock univariate_natural(const SmoothTermSpec& s, const DataTable& d) {
  if (s.covariates.size() == 2) {
    BasisBlock b = tp_basis(covariate_matrix(d, s.covariates), s.k_at(0), s.m);
    return natural_form(b);
  }
  const auto& x = d.values(s.covariates[0]);
  const BasisKind kind = s.basis_kind == BasisKind::Ti ? s.margin_kind : s.basis_kind;
  return natural_form(marginal(kind, x, s.k_at(0), s.covariates[0]));
}

}  // namespace detail

inline Index AssembledDesign::unpenalized_dim() const {
  Index total = 0;
  for (const auto& t : terms) {
    if (!t.penalized()) {
      total += t.size;
      continue;
    }
    MatrixXd sum = MatrixXd::Zero(t.size, t.size);
    for (auto j : t.penalties) sum += penalties[j].S;
    total += t.size - detail::psd_rank(sum);
  }
  return total;
}

/// Builds the model matrix, identifiability constraints and penalties for a
/// spec. Rows are put in (series, order) order when the spec names a series.
inline AssembledDesign assemble(const DataTable& input, const ModelSpec& spec) {
  spec.validate();
  if (input.n_rows() == 0) fail(ErrorKind::EmptyData, "no rows");
  AssembledDesign out;
  out.row_index = detail::model_order(input, spec);
  out.data = input.select_rows(out.row_index);
  if (spec.series_key) out.data.set_series(*spec.series_key, *spec.order_key);
  const DataTable& d = out.data;
  const Index n = static_cast<Index>(d.n_rows());

  const auto& yv = d.values(spec.response);
  out.y = Eigen::Map<const VectorXd>(yv.data(), n);
  if (spec.series_key) {
    const auto& f = d.factor(*spec.series_key);
    out.series = f.codes;
    out.series_levels = f.levels;
    out.order = d.values(*spec.order_key);
  } else {
    out.series.assign(static_cast<std::size_t>(n), 0);
    out.series_levels = {"all"};
    out.order.resize(static_cast<std::size_t>(n));
    std::iota(out.order.begin(), out.order.end(), 0.0);
  }

  std::vector<MatrixXd> blocks;
  auto add_term = [&](DesignTerm term, MatrixXd X, const std::vector<Penalty>& pens, bool scale) {
    term.size = X.cols();
    if (term.size == 0) fail(ErrorKind::Spec, "term '" + term.label + "' has no columns");
    for (const auto& p : pens) {
      DesignPenalty dp;
      dp.term = out.terms.size();
      dp.scale = scale ? detail::penalty_scale(X, p.S) : 1.0;
      dp.S = p.S * dp.scale;
      dp.label = p.label;
      dp.diagonal = detail::is_diagonal(dp.S);
      if (dp.S.cwiseAbs().maxCoeff() == 0.0) continue;
      term.penalties.push_back(out.penalties.size());
      out.penalties.push_back(std::move(dp));
    }
    blocks.push_back(std::move(X));
    out.terms.push_back(std::move(term));
  };

  {
    DesignTerm icpt;
    icpt.label = "(Intercept)";
    icpt.kind = TermKind::Intercept;
    icpt.column_names = {"(Intercept)"};
    icpt.evaluate = [](const DataTable& t, const EvalOptions&, EvalInfo&) {
      return MatrixXd(MatrixXd::Ones(static_cast<Index>(t.n_rows()), 1));
    };
    add_term(icpt, MatrixXd::Ones(n, 1), {}, false);
  }

  for (const auto& pt : spec.parametric_terms) {
    std::vector<detail::VariableCoder> coders;
    for (const auto& v : pt.variables) {
      detail::VariableCoder c;
      c.name = v;
      c.coding = pt.coding;
      c.is_factor = d.is_factor(v);
      if (c.is_factor) {
        c.train.levels = d.factor(v).levels;
        if (c.train.n_levels() < 2) fail(ErrorKind::Degenerate, "factor '" + v + "' has a single level");
      } else {
        d.numeric(v);
      }
      coders.push_back(std::move(c));
    }
    DesignTerm term;
    term.label = pt.label();
    term.kind = TermKind::Parametric;
    term.column_names = {""};
    for (const auto& c : coders) {
      std::vector<std::string> next;
      for (const auto& a : term.column_names)
        for (const auto& b : c.names()) next.push_back(a.empty() ? b : a + ":" + b);
      term.column_names = next;
      if (!c.is_factor) term.covariates.push_back(c.name);
    }
    term.evaluate = [coders](const DataTable& t, const EvalOptions&, EvalInfo&) {
      MatrixXd X = coders.front().columns(t);
      for (std::size_t i = 1; i < coders.size(); ++i) X = detail::row_kron(X, coders[i].columns(t));
      return X;
    };
    EvalInfo info;
    MatrixXd X = term.evaluate(d, EvalOptions{}, info);
    add_term(term, X, {}, false);
  }

  for (const auto& s : spec.smooth_terms) {
    DesignTerm term;
    term.label = s.label();
    term.kind = s.is_random_effect ? TermKind::Random : TermKind::Smooth;

    if (s.is_random_effect) {
      const std::string g = s.covariates[0];
      const FactorColumn train = d.factor(g);
      std::optional<std::string> slope;
      if (s.covariates.size() > 1) slope = s.covariates[1];
      BasisBlock b = slope ? random_effect(train.codes, static_cast<Index>(train.n_levels()), d.values(*slope))
                           : random_effect(train.codes, static_cast<Index>(train.n_levels()));
      term.factor = g;
      if (slope) term.covariates = {*slope};
      auto map = b.map;
      term.evaluate = [map, train, g, slope](const DataTable& t, const EvalOptions& o, EvalInfo& info) {
        BasisInput in;
        in.level = detail::map_levels(train, t.factor(g), g);
        if (slope) in.x = detail::covariate_matrix(t, {*slope});
        return map->evaluate(in, o, info);
      };
      add_term(term, b.X, b.penalties, false);
      continue;
    }

    term.covariates = s.covariates;
    auto numeric_input = [cov = s.covariates](const DataTable& t) {
      BasisInput in;
      in.x = detail::covariate_matrix(t, cov);
      return in;
    };

    if (s.fs_group) {
      const std::string g = *s.fs_group;
      const FactorColumn train = d.factor(g);
      BasisBlock raw = detail::marginal(s.basis_kind == BasisKind::Cr ? BasisKind::Cr : BasisKind::Tp,
                                        d.values(s.covariates[0]), s.k_at(0), s.covariates[0]);
      BasisBlock b = factor_smooth(raw, train.codes, static_cast<Index>(train.n_levels()));
      term.factor = g;
      auto map = b.map;
      term.evaluate = [map, train, g, numeric_input](const DataTable& t, const EvalOptions& o, EvalInfo& info) {
        BasisInput in = numeric_input(t);
        in.level = detail::map_levels(train, t.factor(g), g);
        return map->evaluate(in, o, info);
      };
      add_term(term, b.X, b.penalties, true);
      continue;
    }

    if (s.by) {
      const std::string g = *s.by;
      const FactorColumn train = d.factor(g);
      const Index L = static_cast<Index>(train.n_levels());
      BasisBlock b = apply_by_factor(detail::univariate_natural(s, d), train.codes, L, true);
      const Index p = b.cols() / L;
      auto map = b.map;
      for (Index l = 0; l < L; ++l) {
        DesignTerm lt = term;
        lt.label = term.label + ":" + train.levels[static_cast<std::size_t>(l)];
        lt.factor = g;
        lt.level = train.levels[static_cast<std::size_t>(l)];
        lt.evaluate = [map, train, g, numeric_input, l, p](const DataTable& t, const EvalOptions& o, EvalInfo& info) {
          BasisInput in = numeric_input(t);
          in.level = detail::map_levels(train, t.factor(g), g);
          return MatrixXd(map->evaluate(in, o, info).middleCols(l * p, p));
        };
        std::vector<Penalty> pens;
        for (std::size_t j = 0; j < b.penalties.size(); ++j) {
          if (static_cast<Index>(j) / static_cast<Index>(b.penalties.size() / static_cast<std::size_t>(L)) != l) continue;
          pens.push_back({MatrixXd(b.penalties[j].S.block(l * p, l * p, p, p)), b.penalties[j].label});
        }
        add_term(lt, b.X.middleCols(l * p, p), pens, true);
      }
      continue;
    }

    BasisBlock b;
    switch (s.basis_kind) {
      case BasisKind::Poly:
        b = poly_basis(d.values(s.covariates[0]), s.k_at(0));
        break;
      case BasisKind::Cr:
      case BasisKind::Tp:
        b = absorb_constraints(detail::univariate_natural(s, d));
        break;
      case BasisKind::Ti:
        if (s.covariates.size() == 1) {
          b = absorb_constraints(detail::univariate_natural(s, d));
        } else {
          BasisBlock a = detail::marginal(s.margin_kind, d.values(s.covariates[0]), s.k_at(0), s.covariates[0]);
          BasisBlock c = detail::marginal(s.margin_kind, d.values(s.covariates[1]), s.k_at(1), s.covariates[1]);
          b = center_columns(tensor_product(a, c, true), false);
        }
        break;
      case BasisKind::Tensor: {
        auto nat = [&](std::size_t i) {
          return center_columns(
              natural_form(detail::marginal(s.margin_kind, d.values(s.covariates[i]), s.k_at(i), s.covariates[i])), true);
        };
        b = absorb_constraints(tensor_product(nat(0), nat(1), false));
        break;
      }
    }
    auto map = b.map;
    term.evaluate = [map, numeric_input](const DataTable& t, const EvalOptions& o, EvalInfo& info) {
      return map->evaluate(numeric_input(t), o, info);
    };
    add_term(term, b.X, b.penalties, true);
  }

  Index p = 0;
  for (auto& t : out.terms) {
    t.start = p;
    p += t.size;
  }
  if (p > n) fail(ErrorKind::Rank, std::to_string(p) + " coefficients for " + std::to_string(n) + " rows");
  out.X.resize(n, p);
  for (std::size_t i = 0; i < out.terms.size(); ++i) out.X.middleCols(out.terms[i].start, out.terms[i].size) = blocks[i];
  return out;
}

/// AR(1) whitening within each series: the first row of a series is scaled
/// by sqrt(1 - rho^2), later rows become row_t - rho * row_{t-1}. Rows must
/// already be in series/order order.
inline AssembledDesign ar1_whiten(const AssembledDesign& design, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorKind::Domain, "rho must lie in [0, 1)");
  if (design.rho != 0.0) fail(ErrorKind::Spec, "design is already whitened");
  for (std::size_t i = 1; i < design.series.size(); ++i)
    if (design.series[i] == design.series[i - 1] && !(design.order[i] > design.order[i - 1]))
      fail(ErrorKind::Ordering, "rows are not in increasing order within series");
  AssembledDesign out = design;
  out.rho = rho;
  if (rho == 0.0) return out;
  const double head = std::sqrt(1.0 - rho * rho);
  for (Index i = design.n() - 1; i >= 0; --i) {
    const bool first = i == 0 || design.series[static_cast<std::size_t>(i)] != design.series[static_cast<std::size_t>(i - 1)];
    if (first) {
      out.y(i) = head * design.y(i);
      out.X.row(i) = head * design.X.row(i);
    } else {
      out.y(i) = design.y(i) - rho * design.y(i - 1);
      out.X.row(i) = design.X.row(i) - rho * design.X.row(i - 1);
    }
  }
  return out;
}

/// Whitening with an explicit series factor (rows in model order).
inline AssembledDesign ar1_whiten(const AssembledDesign& design, double rho, const FactorColumn& series) {
  if (series.size() != static_cast<std::size_t>(design.n())) fail(ErrorKind::Length, "series factor length mismatch");
  AssembledDesign d = design;
  d.series = series.codes;
  d.series_levels = series.levels;
  return ar1_whiten(d, rho);
}

}  // namespace gammkit

#endif  // GAMMKIT_DESIGN_HPP
