#ifndef GAMMKIT_CLI_HPP
#define GAMMKIT_CLI_HPP

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gammkit/diagnostics.hpp"
#include "gammkit/inference.hpp"

namespace gammkit::cli {

enum class Command { Fit, Predict, Compare, Acf, SuggestRho, Simulate, Permtest };
enum class Format { Text, Delimited };

struct RunConfig {
  Command command = Command::Fit;
  std::string data;
  std::vector<std::string> specs;  // model spec files; the scenario file for simulate
  std::optional<double> rho;
  std::string output_dir = ".";
  std::optional<std::uint64_t> seed;
  Format format = Format::Text;
  int max_lag = default_max_lag;
  int n_perm = 100;
  std::optional<std::string> newdata;  // predict only; defaults to the training data
};

inline std::optional<Command> parse_command(const std::string& s) {
  if (s == "fit") return Command::Fit;
  if (s == "predict") return Command::Predict;
  if (s == "compare") return Command::Compare;
  if (s == "acf") return Command::Acf;
  if (s == "suggest-rho") return Command::SuggestRho;
  if (s == "simulate") return Command::Simulate;
  if (s == "permtest") return Command::Permtest;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Formatting

inline std::string fixed4(double x) {
  if (!std::isfinite(x)) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << x;
  return s.str();
}

inline std::string format_p(double p) { return p < 1e-4 ? "< 0.0001" : fixed4(p); }

inline std::string num(double x) { return std::isfinite(x) ? detail::format_double(x) : "NA"; }

/// Filesystem-friendly stem for a term label: s(x):a -> s_x_a.
inline std::string file_stem(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

/// Pads cells to column widths; the first column is left-aligned.
inline std::string align(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (width.size() <= j) width.push_back(0);
      width[j] = std::max(width[j], r[j].size());
    }
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j == 0) out << std::left << std::setw(static_cast<int>(width[j])) << r[j];
      else out << "  " << std::right << std::setw(static_cast<int>(width[j])) << r[j];
    }
    out << '\n';
  }
  return out.str();
}

inline std::string delimited(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << detail::csv_quote(r[j]);
    out << '\n';
  }
  return out.str();
}

inline std::string table(const std::vector<std::vector<std::string>>& rows, Format f) {
  return f == Format::Text ? align(rows) : delimited(rows);
}

// ---------------------------------------------------------------------------
// Output handling

/// Files are staged in memory and written together; if any write fails the
/// ones already written are removed.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back(f.first);
    return out;
  }

  void commit() {
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    const bool created = !fs::exists(dir_);
    try {
      fs::create_directories(dir_);
      for (const auto& [name, content] : files_) {
        const fs::path p = dir_ / name;
        std::ofstream out(p, std::ios::binary);
        if (!out) fail(ErrorKind::Io, "cannot open '" + p.string() + "' for writing");
        written.push_back(p);
        out << content;
        out.close();
        if (!out) fail(ErrorKind::Io, "failed writing '" + p.string() + "'");
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : written) fs::remove(p, ec);
      if (created) fs::remove(dir_, ec);
      throw;
    }
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------------------
// Inputs

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Loads the columns a spec needs; parametric variables whose values are not
/// all numeric become factors. Without the response, only covariates are read.
inline DataTable load_for_spec(const std::string& path, const ModelSpec& spec, bool with_response = true) {
  const std::string text = read_file(path);
  std::istringstream probe(text);
  const CsvSchema inferred = infer_schema(probe);
  std::vector<std::string> factors;
  for (const auto& [name, type] : inferred.columns)
    if (type == ColumnType::Factor) factors.push_back(name);
  CsvSchema schema = schema_for(spec, factors);
  if (!with_response)
    std::erase_if(schema.columns, [&](const auto& c) { return c.first == spec.response; });
  std::istringstream in(text);
  return read_csv(in, schema);
}

inline ModelSpec load_spec(const std::string& path, std::optional<double> rho) {
  ModelSpec spec = parse_model_spec(read_file(path));
  if (rho) spec.rho = *rho;
  spec.validate();
  return spec;
}

/// Scenario file, one `key: value` per line:
///   subjects: 50
///   trials: 400
///   rho: 0.3
///   sigma: 1
///   intercept: 0
///   intercept_sd: 0.5
///   trend: undulating 1.0
///   factor: a 0.3
///   numeric: x 1.0
///   interaction: a b 0.25
///   seed: 7
inline ScenarioSpec parse_scenario(std::string_view text) {
  ScenarioSpec s;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  auto bad = [&](const std::string& why) { fail(ErrorKind::Parse, "scenario line " + std::to_string(line) + ": " + why); };
  auto number = [&](const std::string& tok) {
    auto v = detail::parse_double(tok);
    if (!v) bad("'" + tok + "' is not a number");
    return *v;
  };
  while (std::getline(in, raw)) {
    ++line;
    if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
    const auto colon = raw.find(':');
    std::istringstream rest(colon == std::string::npos ? "" : raw.substr(colon + 1));
    std::vector<std::string> tok;
    for (std::string t; rest >> t;) tok.push_back(t);
    std::string key = colon == std::string::npos ? raw : raw.substr(0, colon);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    if (key.empty() && tok.empty()) continue;
    if (colon == std::string::npos || tok.empty()) bad("expected 'key: value'");
    auto count = [&](std::size_t n) {
      if (tok.size() != n) bad("'" + key + "' takes " + std::to_string(n) + " value(s)");
    };
    if (key == "subjects") { count(1); s.n_subjects = static_cast<int>(number(tok[0])); }
    else if (key == "trials") { count(1); s.n_trials = static_cast<int>(number(tok[0])); }
    else if (key == "rho") { count(1); s.rho = number(tok[0]); }
    else if (key == "sigma") { count(1); s.sigma = number(tok[0]); }
    else if (key == "intercept") { count(1); s.intercept = number(tok[0]); }
    else if (key == "intercept_sd") { count(1); s.subject_intercept_sd = number(tok[0]); }
    else if (key == "seed") { count(1); s.seed = static_cast<std::uint64_t>(number(tok[0])); }
    else if (key == "trend") {
      if (tok.size() > 2) bad("'trend' takes a kind and an optional amplitude");
      s.trend = parse_trend_kind(tok[0]);
      s.trend_amplitude = tok.size() > 1 ? number(tok[1]) : 1.0;
    } else if (key == "factor" || key == "numeric") {
      count(2);
      s.fixed_effects.push_back({tok[0], key == "factor" ? FixedKind::Factor : FixedKind::Numeric, number(tok[1]), {}});
    } else if (key == "interaction") {
      count(3);
      s.interactions.emplace_back(tok[0], tok[1]);
      s.interaction_coefficients.push_back(number(tok[2]));
    } else {
      bad("unknown key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string summary_text(const FittedModel& m, Format f) {
  const ModelSummary s = summarize(m);
  std::ostringstream out;
  std::vector<std::vector<std::string>> para{{"term", "Estimate", "Std. Error", "t value", "Pr(>|t|)"}};
  for (const auto& r : s.parametric) para.push_back({r.name, fixed4(r.estimate), fixed4(r.se), fixed4(r.t), format_p(r.p)});
  std::vector<std::vector<std::string>> smooth{{"term", "edf", "Ref.df", "F", "p-value", "note"}};
  for (const auto& r : s.smooth)
    smooth.push_back({r.term, fixed4(r.edf), fixed4(r.ref_df), fixed4(r.statistic), format_p(r.p), r.approximate ? "approximate" : ""});
  if (f == Format::Text) {
    out << "response: " << m.spec.response << "\n";
    out << "rho (AR1): " << fixed4(m.rho) << "\n\n";
    out << "A. parametric coefficients\n" << align(para) << "\n";
    out << "B. smooth terms (p-values are approximate)\n";
    out << (s.smooth.empty() ? std::string("(none)\n") : align(smooth)) << "\n";
    out << "n = " << s.n << "  total edf = " << fixed4(s.total_edf) << "  scale = " << fixed4(s.sigma2)
        << "  R-sq = " << fixed4(s.r_squared) << "\n";
    out << "REML = " << fixed4(s.reml) << "  AIC = " << fixed4(s.aic) << "\n";
    for (const auto& w : m.warnings) out << "warning: " << w << "\n";
  } else {
    out << delimited(para) << "\n" << delimited(smooth) << "\n";
    out << delimited({{"n", "total_edf", "scale", "r_squared", "reml", "aic", "rho"},
                      {std::to_string(s.n), num(s.total_edf), num(s.sigma2), num(s.r_squared), num(s.reml), num(s.aic), num(m.rho)}});
  }
  return out.str();
}

inline std::string coefficients_csv(const FittedModel& m) {
  std::vector<std::vector<std::string>> rows{{"term", "coefficient", "estimate", "se", "edf"}};
  for (const auto& t : m.design->terms)
    for (Index j = 0; j < t.size; ++j) {
      const Index c = t.start + j;
      const std::string name = t.column_names.empty() ? t.label + "." + std::to_string(j + 1)
                                                      : t.column_names.at(static_cast<std::size_t>(j));
      rows.push_back({t.label, name, num(m.beta(c)), num(std::sqrt(m.Vb(c, c))), num(m.edf(c))});
    }
  return delimited(rows);
}

inline std::string residuals_csv(const FittedModel& m) {
  const AssembledDesign& d = *m.design;
  std::vector<std::vector<std::string>> rows{{"row", "series", "order", "fitted", "residual", "residual_whitened"}};
  for (Index i = 0; i < d.n(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    rows.push_back({std::to_string(d.row_index[r] + 1), d.series_levels.at(static_cast<std::size_t>(d.series[r])),
                    num(d.order[r]), num(m.fitted(i)), num(m.residuals(i)), num(m.residuals_whitened(i))});
  }
  return delimited(rows);
}

/// Partial-effect grid for one smooth or random term.
inline std::string effect_csv(const FittedModel& m, const DesignTerm& t) {
  std::vector<std::vector<std::string>> rows;
  auto emit = [&](const DataTable& g, bool with_level) {
    const Prediction p = partial_effect(m, t.label, g);
    for (std::size_t i = 0; i < g.n_rows(); ++i) {
      std::vector<std::string> r;
      for (const auto& c : t.covariates) r.push_back(num(g.values(c)[i]));
      if (with_level) r.push_back(g.factor(*t.factor).label(i));
      r.push_back(num(p.mean(static_cast<Index>(i))));
      r.push_back(num(p.se(static_cast<Index>(i))));
      rows.push_back(std::move(r));
    }
  };
  if (t.kind == TermKind::Random) {
    rows.push_back({*t.factor, "effect", "se"});
    const DataTable g = effect_grid(m, t.label);
    const Prediction p = partial_effect(m, t.label, g);
    for (std::size_t i = 0; i < g.n_rows(); ++i)
      rows.push_back({g.factor(*t.factor).label(i), num(p.mean(static_cast<Index>(i))), num(p.se(static_cast<Index>(i)))});
    return delimited(rows);
  }
  std::vector<std::string> header = t.covariates;
  const bool per_level = t.factor && !t.level;
  if (per_level) header.push_back(*t.factor);
  header.push_back("effect");
  header.push_back("se");
  rows.push_back(header);
  const int points = t.covariates.size() > 1 ? 40 : 100;
  if (per_level) {
    for (const auto& lv : m.design->data.factor(*t.factor).levels) emit(effect_grid(m, t.label, points, lv), true);
  } else {
    emit(effect_grid(m, t.label, points), false);
  }
  return delimited(rows);
}

inline nlohmann::json fit_record(const FittedModel& m, const RunConfig& cfg) {
  nlohmann::json j;
  j["data"] = cfg.data;
  j["spec"] = cfg.specs.empty() ? "" : cfg.specs.front();
  j["response"] = m.spec.response;
  j["n"] = m.n();
  j["rho"] = m.rho;
  j["reml"] = m.reml;
  j["aic"] = aic(m);
  j["loglik"] = m.loglik;
  j["scale"] = m.sigma2;
  j["total_edf"] = m.total_edf;
  j["converged"] = m.converged;
  j["evaluations"] = m.evaluations;
  j["seed"] = cfg.seed ? nlohmann::json(*cfg.seed) : nlohmann::json(nullptr);
  j["smoothing_parameters"] = nlohmann::json::array();
  for (std::size_t k = 0; k < m.design->penalties.size(); ++k)
    j["smoothing_parameters"].push_back({{"penalty", m.design->penalties[k].label},
                                         {"lambda", m.lambda(static_cast<Index>(k))},
                                         {"raw_lambda", m.raw_lambda(k)}});
  j["warnings"] = m.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Spec, what);
}

inline void cmd_fit(const RunConfig& cfg, OutputSet& out, std::string& stage) {
  require(cfg.specs.size() == 1, "fit takes exactly one --spec");
  stage = "reading spec";
  const ModelSpec spec = load_spec(cfg.specs.front(), cfg.rho);
  stage = "reading data";
  const DataTable data = load_for_spec(cfg.data, spec);
  stage = "fitting";
  const FittedModel m = fit(data, spec);
  stage = "summarizing";
  out.add("summary.txt", summary_text(m, cfg.format));
  out.add("coefficients.csv", coefficients_csv(m));
  out.add("residuals.csv", residuals_csv(m));
  for (const auto& t : m.design->terms)
    if (t.kind == TermKind::Smooth || t.kind == TermKind::Random) out.add("effect_" + file_stem(t.label) + ".csv", effect_csv(m, t));
  out.add("fit.json", fit_record(m, cfg).dump(2) + "\n");
}

inline void cmd_predict(const RunConfig& cfg, OutputSet& out, std::string& stage) {
  require(cfg.specs.size() == 1, "predict takes exactly one --spec");
  stage = "reading spec";
  const ModelSpec spec = load_spec(cfg.specs.front(), cfg.rho);
  stage = "reading data";
  const DataTable data = load_for_spec(cfg.data, spec);
  ModelSpec covariates_only = spec;
  covariates_only.series_key.reset();
  covariates_only.order_key.reset();
  const DataTable newdata = load_for_spec(cfg.newdata.value_or(cfg.data), covariates_only, false);
  stage = "fitting";
  const FittedModel m = fit(data, spec);
  stage = "predicting";
  const Prediction p = predict(m, newdata);
  std::vector<std::vector<std::string>> rows{{"row", "fit", "se"}};
  for (Index i = 0; i < p.mean.size(); ++i) rows.push_back({std::to_string(i + 1), num(p.mean(i)), num(p.se(i))});
  out.add("predictions.csv", delimited(rows));
}

inline void cmd_compare(const RunConfig& cfg, OutputSet& out, std::string& stage) {
  require(cfg.specs.size() == 2, "compare takes exactly two --spec files");
  stage = "reading spec";
  const ModelSpec s0 = load_spec(cfg.specs[0], cfg.rho), s1 = load_spec(cfg.specs[1], cfg.rho);
  require(s0.response == s1.response, "the two specs model different responses");
  stage = "reading data";
  const DataTable d0 = load_for_spec(cfg.data, s0), d1 = load_for_spec(cfg.data, s1);
  stage = "fitting";
  const FittedModel m0 = fit(d0, s0), m1 = fit(d1, s1);
  stage = "comparing";
  const RemlComparison c = compare_reml(m0, m1);
  std::vector<std::vector<std::string>> models{{"model", "AIC", "REML", "Df"}};
  models.push_back({"0", fixed4(aic(m0)), fixed4(m0.reml), std::to_string(comparison_df(m0))});
  models.push_back({"1", fixed4(aic(m1)), fixed4(m1.reml), std::to_string(comparison_df(m1))});
  std::vector<std::vector<std::string>> cmp{{"comparison", "Chisq", "Df", "p-value", "note"}};
  const std::string note = c.simpler_and_better ? "simpler and better" : "";
  cmp.push_back({"0 vs 1", fixed4(c.stat), std::to_string(static_cast<int>(c.df)), c.p ? format_p(*c.p) : "", note});
  std::string text = table(models, cfg.format) + "\n" + table(cmp, cfg.format);
  if (cfg.format == Format::Text) text += "\npreferred: model " + std::to_string(c.preferred) + " (lower REML)\n";
  out.add("comparison.txt", text);
}

inline std::string acf_csv(const GroupAcf& g) {
  std::vector<std::vector<std::string>> rows{{"group", "lag", "acf", "band", "n"}};
  auto emit = [&](const AcfResult& a) {
    for (std::size_t k = 0; k < a.acf.size(); ++k)
      rows.push_back({a.group, std::to_string(a.lags[k]), num(a.acf[k]), num(a.band), std::to_string(a.n)});
  };
  for (const auto& a : g.groups) emit(a);
  emit(g.pooled);
  return delimited(rows);
}

inline void cmd_acf(const RunConfig& cfg, OutputSet& out, std::string& stage, std::ostream& log) {
  require(cfg.specs.size() == 1, "acf takes exactly one --spec");
  stage = "reading spec";
  const ModelSpec spec = load_spec(cfg.specs.front(), cfg.rho);
  require(spec.series_key.has_value(), "acf needs a 'series:' line in the spec");
  stage = "reading data";
  const DataTable data = load_for_spec(cfg.data, spec);
  stage = "fitting";
  const FittedModel m = fit(data, spec);
  stage = "computing autocorrelations";
  const GroupAcf raw = residual_acf_by_group(m, ResidualKind::Raw, cfg.max_lag);
  const GroupAcf white = residual_acf_by_group(m, ResidualKind::Whitened, cfg.max_lag);
  for (const auto& w : raw.warnings) log << "warning: " << w << "\n";
  require(!raw.groups.empty(), "no series is long enough for max lag " + std::to_string(cfg.max_lag));
  out.add("acf_raw.csv", acf_csv(raw));
  out.add("acf_whitened.csv", acf_csv(white));
}

inline void cmd_suggest_rho(const RunConfig& cfg, OutputSet& out, std::string& stage) {
  require(cfg.specs.size() == 1, "suggest-rho takes exactly one --spec");
  stage = "reading spec";
  ModelSpec spec = load_spec(cfg.specs.front(), std::nullopt);
  require(spec.series_key.has_value(), "suggest-rho needs a 'series:' line in the spec");
  stage = "reading data";
  const DataTable data = load_for_spec(cfg.data, spec);
  if (spec.parametric_terms.empty() && spec.smooth_terms.empty()) spec = default_pilot_spec(data, spec.response);
  stage = "fitting pilot model";
  const RhoSuggestion r = suggest_rho(data, spec);
  out.add("rho.txt", num(r.rho_hat) + "\n");
  std::vector<std::vector<std::string>> rows{{"group", "lag1"}};
  for (std::size_t i = 0; i < r.groups.size(); ++i) rows.push_back({r.groups[i], num(r.lag1[i])});
  out.add("lag1.csv", delimited(rows));
}

inline void cmd_permtest(const RunConfig& cfg, OutputSet& out, std::string& stage, std::ostream& log) {
  require(cfg.specs.size() == 1, "permtest takes exactly one --spec");
  stage = "reading spec";
  const ModelSpec spec = load_spec(cfg.specs.front(), std::nullopt);
  require(spec.series_key.has_value(), "permtest needs a 'series:' line in the spec");
  stage = "reading data";
  const DataTable data = load_for_spec(cfg.data, spec);
  stage = "permuting";
  const PermutationResult r = permutation_fs_test(data, spec.response, cfg.n_perm, 0.05, cfg.seed.value_or(1));
  for (const auto& e : r.errors) log << "warning: " << e << "\n";
  std::vector<std::vector<std::string>> rows{{"permutation", "p"}};
  for (std::size_t i = 0; i < r.p_values.size(); ++i) rows.push_back({std::to_string(i + 1), num(r.p_values[i])});
  out.add("p_values.csv", delimited(rows));
  std::ostringstream counts;
  for (double a : {0.05, 0.01})
    counts << "alpha=" << a << " rejections=" << r.count_below(a) << " n=" << (cfg.n_perm - r.failures) << "\n";
  out.add("counts.txt", counts.str());
}

inline void cmd_simulate(const RunConfig& cfg, OutputSet& out, std::string& stage) {
  require(cfg.specs.size() == 1, "simulate takes exactly one --spec (the scenario file)");
  stage = "reading scenario";
  ScenarioSpec s = parse_scenario(read_file(cfg.specs.front()));
  if (cfg.seed) s.seed = *cfg.seed;
  stage = "simulating";
  auto [table, truth] = gen_experiment(s);
  std::ostringstream csv;
  write_csv(csv, table);
  out.add("data.csv", csv.str());
  nlohmann::json j;
  j["seed"] = s.seed;
  j["subjects"] = s.n_subjects;
  j["trials"] = s.n_trials;
  j["intercept"] = truth.intercept;
  j["rho"] = truth.rho;
  j["sigma"] = truth.sigma;
  nlohmann::json fixed = nlohmann::json::object();
  for (std::size_t k = 0; k < s.fixed_effects.size(); ++k) fixed[s.fixed_effects[k].name] = truth.fixed_coefficients[k];
  j["fixed_effects"] = fixed;
  j["interactions"] = nlohmann::json::array();
  for (std::size_t k = 0; k < s.interactions.size(); ++k)
    j["interactions"].push_back({{"terms", {s.interactions[k].first, s.interactions[k].second}}, {"coefficient", truth.interaction_coefficients[k]}});
  j["subject_intercepts"] = truth.subject_intercepts;
  j["trends"] = truth.trends;
  out.add("truth.json", j.dump(2) + "\n");
}

/// Runs one command; returns the process exit status.
inline int run(const RunConfig& cfg, std::ostream& log) {
  OutputSet out(cfg.output_dir);
  std::string stage = "starting";
  try {
    switch (cfg.command) {
      case Command::Fit: cmd_fit(cfg, out, stage); break;
      case Command::Predict: cmd_predict(cfg, out, stage); break;
      case Command::Compare: cmd_compare(cfg, out, stage); break;
      case Command::Acf: cmd_acf(cfg, out, stage, log); break;
      case Command::SuggestRho: cmd_suggest_rho(cfg, out, stage); break;
      case Command::Simulate: cmd_simulate(cfg, out, stage); break;
      case Command::Permtest: cmd_permtest(cfg, out, stage, log); break;
    }
    stage = "writing output";
    out.commit();
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    log << "gammkit: " << stage << ": " << msg << "\n";
    return 1;
  }
  return 0;
}

}  // namespace gammkit::cli

#endif  // GAMMKIT_CLI_HPP
