#ifndef GAMMKIT_MODEL_HPP
#define GAMMKIT_MODEL_HPP

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gammkit/data.hpp"
#include "gammkit/error.hpp"

namespace gammkit {

/// sum: two-level factors coded -0.5/+0.5 (deviation coding beyond two
/// levels); treatment: indicators for every level but the first.
enum class Coding { Sum, Treatment };

struct ParametricTerm {
  std::vector<std::string> variables;  // more than one: interaction
  Coding coding = Coding::Treatment;

  std::string label() const {
    std::string out;
    for (std::size_t i = 0; i < variables.size(); ++i) out += (i ? ":" : "") + variables[i];
    return out;
  }
};

enum class BasisKind { Poly, Cr, Tp, Tensor, Ti };

inline std::string_view to_string(BasisKind k) {
  switch (k) {
    case BasisKind::Poly: return "poly";
    case BasisKind::Cr: return "cr";
    case BasisKind::Tp: return "tp";
    case BasisKind::Tensor: return "te";
    case BasisKind::Ti: return "ti";
  }
  return "?";
}

struct SmoothTermSpec {
  std::vector<std::string> covariates;
  BasisKind basis_kind = BasisKind::Tp;
  std::vector<int> k;                     // one entry, or one per margin for te/ti
  int m = 2;                              // tp penalty order
  BasisKind margin_kind = BasisKind::Cr;  // marginal basis of te/ti, basis of fs
  std::optional<std::string> by;
  std::optional<std::string> fs_group;
  bool is_random_effect = false;  // covariates = {factor} or {factor, slope covariate}

  static constexpr int default_k = 10;
  static constexpr int default_margin_k = 5;
  static constexpr int default_fs_k = 5;

  int k_at(std::size_t i) const {
    if (k.empty()) {
      if (fs_group) return default_fs_k;
      return (basis_kind == BasisKind::Tensor || basis_kind == BasisKind::Ti) ? default_margin_k : default_k;
    }
    return k[std::min(i, k.size() - 1)];
  }

  std::string joined() const {
    std::string s;
    for (std::size_t i = 0; i < covariates.size(); ++i) s += (i ? "," : "") + covariates[i];
    return s;
  }

  std::string label() const {
    if (is_random_effect) return "re(" + joined() + ")";
    if (fs_group) return "fs(" + joined() + "," + *fs_group + ")";
    switch (basis_kind) {
      case BasisKind::Tensor: return "te(" + joined() + ")";
      case BasisKind::Ti: return "ti(" + joined() + ")";
      case BasisKind::Poly: return "poly(" + joined() + "," + std::to_string(k_at(0)) + ")";
      default: return "s(" + joined() + ")";
    }
  }

  void validate() const {
    if (covariates.empty()) fail(ErrorKind::Spec, "smooth term without covariates");
    if (by && fs_group) fail(ErrorKind::Spec, label() + ": by and factor-smooth grouping are exclusive");
    if (is_random_effect) {
      if (covariates.size() > 2) fail(ErrorKind::Spec, label() + ": random effects take a factor and an optional covariate");
      return;
    }
    if ((basis_kind == BasisKind::Tensor) && covariates.size() != 2)
      fail(ErrorKind::Spec, label() + ": tensor product smooths need two covariates");
    if (basis_kind == BasisKind::Ti && covariates.size() > 2) fail(ErrorKind::Spec, label() + ": ti takes one or two covariates");
    if ((basis_kind == BasisKind::Cr || basis_kind == BasisKind::Poly) && covariates.size() != 1)
      fail(ErrorKind::Spec, label() + ": univariate basis given " + std::to_string(covariates.size()) + " covariates");
    if (basis_kind == BasisKind::Tp && covariates.size() > 2) fail(ErrorKind::Spec, label() + ": thin plate smooths take 1 or 2 covariates");
    if (fs_group && covariates.size() != 1) fail(ErrorKind::Spec, label() + ": factor smooths are univariate");
    for (std::size_t i = 0; i < std::max<std::size_t>(1, k.size()); ++i) {
      const int kk = k_at(i);
      if (basis_kind == BasisKind::Poly ? kk < 1 : kk < 3) fail(ErrorKind::Spec, label() + ": basis dimension too small");
    }
  }
};

struct ModelSpec {
  std::string response;
  std::vector<ParametricTerm> parametric_terms;
  std::vector<SmoothTermSpec> smooth_terms;
  double rho = 0.0;
  std::optional<std::string> series_key;
  std::optional<std::string> order_key;

  std::vector<std::string> term_labels() const {
    std::vector<std::string> out{"(Intercept)"};
    for (const auto& t : parametric_terms) out.push_back(t.label());
    for (const auto& s : smooth_terms) out.push_back(s.label());
    return out;
  }

  void validate() const {
    if (response.empty()) fail(ErrorKind::Spec, "no response declared");
    if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorKind::Domain, "rho must lie in [0, 1)");
    for (const auto& s : smooth_terms) s.validate();
    for (const auto& t : parametric_terms)
      if (t.variables.empty()) fail(ErrorKind::Spec, "empty parametric term");
    auto labels = term_labels();
    std::set<std::string> seen;
    for (const auto& l : labels)
      if (!seen.insert(l).second) fail(ErrorKind::Spec, "duplicate term '" + l + "'");
    if (series_key.has_value() != order_key.has_value()) fail(ErrorKind::Spec, "series and order keys go together");
  }

  bool operator==(const ModelSpec& o) const {
    return response == o.response && term_labels() == o.term_labels() && rho == o.rho;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  return out;
}

// "name(a, b) key=value key=v1,v2" -> call name, args, options
struct TermCall {
  std::string name;
  std::vector<std::string> args;
  std::vector<std::pair<std::string, std::string>> options;
};

inline TermCall parse_call(const std::string& text, int line) {
  auto open = text.find('(');
  auto close = text.find(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    fail(ErrorKind::Spec, "line " + std::to_string(line) + ": expected name(args) in '" + text + "'");
  TermCall call;
  call.name = trim(std::string_view(text).substr(0, open));
  for (auto& a : split(std::string_view(text).substr(open + 1, close - open - 1), ','))
    if (!a.empty()) call.args.push_back(a);
  std::istringstream rest(text.substr(close + 1));
  std::string tok;
  while (rest >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Spec, "line " + std::to_string(line) + ": expected key=value, got '" + tok + "'");
    call.options.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return call;
}

inline int parse_int(const std::string& s, int line) {
  auto v = parse_double(s);
  if (!v || *v != static_cast<int>(*v)) fail(ErrorKind::Spec, "line " + std::to_string(line) + ": expected an integer, got '" + s + "'");
  return static_cast<int>(*v);
}

inline BasisKind parse_basis(const std::string& s, int line) {
  if (s == "cr") return BasisKind::Cr;
  if (s == "tp" || s == "s") return BasisKind::Tp;
  if (s == "poly") return BasisKind::Poly;
  fail(ErrorKind::Spec, "line " + std::to_string(line) + ": unknown basis '" + s + "'");
}

}  // namespace detail

/// Line-oriented model description:
///
///   response: logRT
///   parametric: size*orientation coding=sum
///   smooth: tp(soa) k=10
///   smooth: fs(trial, subject) k=5
///   smooth: te(freq, trial) k=5,5
///   random: intercept(word)
///   rho: 0.2
///   series: subject order: trial
inline ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string content = detail::trim(raw);
    if (content.empty()) continue;
    auto colon = content.find(':');
    if (colon == std::string::npos) fail(ErrorKind::Spec, "line " + std::to_string(line) + ": expected 'key: value'");
    std::string key = detail::trim(std::string_view(content).substr(0, colon));
    std::string value = detail::trim(std::string_view(content).substr(colon + 1));

    if (key == "response") {
      spec.response = value;
    } else if (key == "rho") {
      auto v = detail::parse_double(value);
      if (!v) fail(ErrorKind::Spec, "line " + std::to_string(line) + ": bad rho");
      spec.rho = *v;
    } else if (key == "series") {
      // "subject order: trial"
      std::istringstream parts(value);
      std::string series, order_kw, order;
      parts >> series >> order_kw >> order;
      if (order_kw == "order:" && !order.empty()) {
        spec.series_key = series;
        spec.order_key = order;
      } else {
        fail(ErrorKind::Spec, "line " + std::to_string(line) + ": expected 'series: <factor> order: <numeric>'");
      }
    } else if (key == "parametric") {
      std::istringstream parts(value);
      std::string vars, tok;
      parts >> vars;
      Coding coding = Coding::Treatment;
      while (parts >> tok) {
        if (tok == "coding=sum") coding = Coding::Sum;
        else if (tok == "coding=treatment") coding = Coding::Treatment;
        else fail(ErrorKind::Spec, "line " + std::to_string(line) + ": unknown option '" + tok + "'");
      }
      auto factors = detail::split(vars, '*');
      if (factors.size() == 1) factors = detail::split(vars, ':');
      const bool crossed = vars.find('*') != std::string::npos;
      if (!crossed) {
        spec.parametric_terms.push_back({factors, coding});
      } else {
        // a*b*c expands to every non-empty subset in order of size.
        const std::size_t m = factors.size();
        for (std::size_t size = 1; size <= m; ++size)
          for (unsigned mask = 1; mask < (1u << m); ++mask) {
            if (static_cast<std::size_t>(__builtin_popcount(mask)) != size) continue;
            ParametricTerm term{{}, coding};
            for (std::size_t b = 0; b < m; ++b)
              if (mask & (1u << b)) term.variables.push_back(factors[b]);
            spec.parametric_terms.push_back(term);
          }
      }
    } else if (key == "smooth" || key == "random") {
      auto call = detail::parse_call(value, line);
      SmoothTermSpec term;
      term.covariates = call.args;
      if (key == "random" || call.name == "re") {
        if (call.name != "intercept" && call.name != "slope" && call.name != "re")
          fail(ErrorKind::Spec, "line " + std::to_string(line) + ": unknown random effect '" + call.name + "'");
        if (call.name == "intercept" && call.args.size() != 1)
          fail(ErrorKind::Spec, "line " + std::to_string(line) + ": intercept(factor) takes one argument");
        if (call.name == "slope" && call.args.size() != 2)
          fail(ErrorKind::Spec, "line " + std::to_string(line) + ": slope(factor, covariate) takes two arguments");
        term.is_random_effect = true;
      } else if (call.name == "fs") {
        if (call.args.size() != 2) fail(ErrorKind::Spec, "line " + std::to_string(line) + ": fs(covariate, factor)");
        term.covariates = {call.args[0]};
        term.fs_group = call.args[1];
        term.basis_kind = BasisKind::Tp;
      } else if (call.name == "te") {
        term.basis_kind = BasisKind::Tensor;
      } else if (call.name == "ti") {
        term.basis_kind = BasisKind::Ti;
      } else {
        term.basis_kind = detail::parse_basis(call.name, line);
      }
      for (const auto& [opt, val] : call.options) {
        if (opt == "k") {
          term.k.clear();
          for (const auto& piece : detail::split(val, ',')) term.k.push_back(detail::parse_int(piece, line));
        } else if (opt == "by") {
          term.by = val;
        } else if (opt == "bs") {
          auto kind = detail::parse_basis(val, line);
          if (term.fs_group) term.basis_kind = kind;
          term.margin_kind = kind;
        } else if (opt == "m") {
          term.m = detail::parse_int(val, line);
        } else {
          fail(ErrorKind::Spec, "line " + std::to_string(line) + ": unknown option '" + opt + "'");
        }
      }
      spec.smooth_terms.push_back(term);
    } else {
      fail(ErrorKind::Spec, "line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

/// Columns a spec reads, with their required type.
inline CsvSchema schema_for(const ModelSpec& spec, const std::vector<std::string>& factor_hints = {}) {
  CsvSchema schema;
  auto add = [&](const std::string& name, ColumnType type) {
    for (const auto& [n, t] : schema.columns)
      if (n == name) return;
    schema.columns.emplace_back(name, type);
  };
  add(spec.response, ColumnType::Numeric);
  if (spec.series_key) add(*spec.series_key, ColumnType::Factor);
  if (spec.order_key) add(*spec.order_key, ColumnType::Numeric);
  for (const auto& t : spec.parametric_terms)
    for (const auto& v : t.variables)
      add(v, std::find(factor_hints.begin(), factor_hints.end(), v) != factor_hints.end() ? ColumnType::Factor
                                                                                           : ColumnType::Numeric);
  for (const auto& s : spec.smooth_terms) {
    if (s.is_random_effect) {
      add(s.covariates[0], ColumnType::Factor);
      if (s.covariates.size() > 1) add(s.covariates[1], ColumnType::Numeric);
      continue;
    }
    for (const auto& c : s.covariates) add(c, ColumnType::Numeric);
    if (s.by) add(*s.by, ColumnType::Factor);
    if (s.fs_group) add(*s.fs_group, ColumnType::Factor);
  }
  if (spec.series_key) schema.series(*spec.series_key, *spec.order_key);
  return schema;
}

}  // namespace gammkit

#endif  // GAMMKIT_MODEL_HPP
