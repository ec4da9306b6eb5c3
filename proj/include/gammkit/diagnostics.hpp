#ifndef GAMMKIT_DIAGNOSTICS_HPP
#define GAMMKIT_DIAGNOSTICS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include "gammkit/inference.hpp"
#include "gammkit/simulate.hpp"

namespace gammkit {

struct AcfResult {
  std::string group;
  std::vector<int> lags;
  std::vector<double> acf;
  std::size_t n = 0;
  double band = 0.0;
};

inline constexpr int default_max_lag = 30;

inline AcfResult acf(std::span<const double> x, int max_lag = default_max_lag) {
  if (max_lag < 0) fail(ErrorKind::Domain, "max_lag must be non-negative");
  const std::size_t n = x.size();
  if (n <= static_cast<std::size_t>(max_lag) + 1)
    fail(ErrorKind::Length, "series of length " + std::to_string(n) + " is too short for max_lag " + std::to_string(max_lag));
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  if (!(denom > 0.0)) fail(ErrorKind::Degenerate, "series has zero variance");

  AcfResult out;
  out.n = n;
  out.band = 1.96 / std::sqrt(static_cast<double>(n));
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t + static_cast<std::size_t>(k) < n; ++t) s += (x[t] - mean) * (x[t + static_cast<std::size_t>(k)] - mean);
    out.lags.push_back(k);
    out.acf.push_back(k == 0 ? 1.0 : s / denom);
  }
  return out;
}

enum class ResidualKind { Raw, Whitened };

struct GroupAcf {
  std::vector<AcfResult> groups;
  AcfResult pooled;  // unweighted mean over groups, band from the total length
  std::vector<std::string> warnings;
};

namespace detail {

/// Contiguous [begin, end) row ranges of each series in model order.
inline std::vector<std::pair<std::size_t, std::size_t>> series_ranges(const AssembledDesign& d) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = d.series.size();
  std::size_t b = 0;
  for (std::size_t i = 1; i <= n; ++i)
    if (i == n || d.series[i] != d.series[b]) {
      out.emplace_back(b, i);
      b = i;
    }
  return out;
}

inline AcfResult pool(const std::vector<AcfResult>& groups, int max_lag) {
  AcfResult out;
  out.group = "pooled";
  out.acf.assign(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) out.lags.push_back(k);
  for (const auto& g : groups) {
    out.n += g.n;
    for (std::size_t k = 0; k < out.acf.size(); ++k) out.acf[k] += g.acf[k] / static_cast<double>(groups.size());
  }
  if (!groups.empty()) out.acf[0] = 1.0;
  out.band = out.n ? 1.96 / std::sqrt(static_cast<double>(out.n)) : 0.0;
  return out;
}

inline unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GAMMKIT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs body(i) for i in [0, n) on a small pool; order of completion is irrelevant
/// because callers write into preallocated slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline GroupAcf residual_acf_by_group(const FittedModel& m, ResidualKind which = ResidualKind::Whitened,
                                      int max_lag = default_max_lag) {
  const AssembledDesign& d = *m.design;
  const VectorXd& r = which == ResidualKind::Raw ? m.residuals : m.residuals_whitened;
  GroupAcf out;
  for (auto [b, e] : detail::series_ranges(d)) {
    const std::string& label = d.series_levels.at(static_cast<std::size_t>(d.series[b]));
    if (e - b < static_cast<std::size_t>(max_lag) + 2) {
      out.warnings.push_back("series '" + label + "' has " + std::to_string(e - b) + " rows and was skipped");
      continue;
    }
    AcfResult a = acf(std::span<const double>(r.data() + b, e - b), max_lag);
    a.group = label;
    out.groups.push_back(std::move(a));
  }
  out.pooled = detail::pool(out.groups, max_lag);
  return out;
}

/// Pilot model: intercept plus a factor smooth of the order key by series.
inline ModelSpec default_pilot_spec(const DataTable& table, const std::string& response, int k = SmoothTermSpec::default_fs_k) {
  if (!table.series_key() || !table.order_key()) fail(ErrorKind::Spec, "table has no series structure");
  ModelSpec spec;
  spec.response = response;
  spec.series_key = table.series_key();
  spec.order_key = table.order_key();
  SmoothTermSpec fs;
  fs.covariates = {*table.order_key()};
  fs.fs_group = *table.series_key();
  fs.k = {k};
  spec.smooth_terms.push_back(fs);
  return spec;
}

struct RhoSuggestion {
  double rho_hat = 0.0;     // clipped to [0, 0.95]
  double raw_mean = 0.0;    // unclipped mean of the per-group values
  std::vector<std::string> groups;
  std::vector<double> lag1;
};

inline RhoSuggestion suggest_rho(const DataTable& table, ModelSpec base_spec) {
  if (!base_spec.series_key) {
    if (!table.series_key()) fail(ErrorKind::Spec, "table has no series structure");
    base_spec.series_key = table.series_key();
    base_spec.order_key = table.order_key();
  }
  base_spec.rho = 0.0;
  const FittedModel pilot = fit(table, base_spec);
  const GroupAcf g = residual_acf_by_group(pilot, ResidualKind::Raw, 1);
  RhoSuggestion out;
  for (const auto& a : g.groups) {
    out.groups.push_back(a.group);
    out.lag1.push_back(a.acf[1]);
  }
  if (out.lag1.empty()) fail(ErrorKind::InsufficientData, "no series long enough to estimate the lag-1 autocorrelation");
  for (double v : out.lag1) out.raw_mean += v / static_cast<double>(out.lag1.size());
  out.rho_hat = std::clamp(out.raw_mean, 0.0, 0.95);
  return out;
}

inline RhoSuggestion suggest_rho(const DataTable& table, const std::string& response) {
  return suggest_rho(table, default_pilot_spec(table, response));
}

struct PermutationResult {
  double alpha = 0.05;
  int rejections = 0;
  std::vector<double> p_values;  // NaN where the fit failed
  int failures = 0;
  std::vector<std::string> errors;

  int count_below(double a) const {
    return static_cast<int>(std::count_if(p_values.begin(), p_values.end(), [a](double p) { return p < a; }));
  }
};

/// Response centred within each series. Series means survive any within-series
/// shuffle, so the permutation check removes them before fitting.
inline DataTable center_within_series(const DataTable& table, const std::string& response) {
  const auto& f = table.factor(*table.series_key());
  std::vector<double> y = table.values(response);
  std::vector<double> sum(f.levels.size(), 0.0), count(f.levels.size(), 0.0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    sum[static_cast<std::size_t>(f.codes[i])] += y[i];
    count[static_cast<std::size_t>(f.codes[i])] += 1.0;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto g = static_cast<std::size_t>(f.codes[i]);
    y[i] -= sum[g] / count[g];
  }
  DataTable out = table;
  out.set_numeric(response, std::move(y));
  return out;
}

/// Shuffles the order key within each series, using one generator per call.
inline DataTable permute_order(const DataTable& table, std::mt19937_64& rng) {
  const auto& series = table.factor(*table.series_key()).codes;
  std::vector<double> order = table.values(*table.order_key());
  std::vector<std::vector<std::size_t>> rows(table.factor(*table.series_key()).levels.size());
  for (std::size_t i = 0; i < series.size(); ++i) rows[static_cast<std::size_t>(series[i])].push_back(i);
  for (const auto& idx : rows) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[idx[i - 1]], order[idx[pick(rng)]]);
    }
  }
  DataTable out = table;
  out.set_numeric(*table.order_key(), std::move(order));
  out.set_series(*table.series_key(), *table.order_key());
  return out;
}

inline double factor_smooth_p(const DataTable& table, const ModelSpec& spec) {
  const FittedModel m = fit(table, spec);
  return wald_term_test(m, spec.smooth_terms.front().label()).p;
}

inline PermutationResult permutation_fs_test(const DataTable& table, const std::string& response, int n_perm,
                                             double alpha, std::uint64_t seed) {
  if (n_perm < 1) fail(ErrorKind::Domain, "n_perm must be at least 1");
  if (!table.series_key() || !table.order_key()) fail(ErrorKind::Spec, "table has no series structure");
  const ModelSpec spec = default_pilot_spec(table, response);
  const DataTable centred = center_within_series(table, response);
  PermutationResult out;
  out.alpha = alpha;
  out.p_values.assign(static_cast<std::size_t>(n_perm), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(static_cast<std::size_t>(n_perm));
  detail::parallel_for(static_cast<std::size_t>(n_perm), [&](std::size_t i) {
    try {
      auto rng = make_stream(seed, Stream::Assignment, i);
      out.p_values[i] = factor_smooth_p(permute_order(centred, rng), spec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) {
      ++out.failures;
      out.errors.push_back("permutation " + std::to_string(i) + ": " + errors[i]);
    }
  out.rejections = out.count_below(alpha);
  return out;
}

struct GroupCv {
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double cv = 0.0;
};

struct CvTable {
  std::vector<GroupCv> rows;
  std::vector<std::string> warnings;
};

inline CvTable cv_by_group(const DataTable& table, const std::string& value_column, const std::string& group) {
  const auto& v = table.values(value_column);
  const auto& f = table.factor(group);
  std::vector<std::vector<double>> by(f.levels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) fail(ErrorKind::Domain, "coefficient of variation needs positive values");
    by[static_cast<std::size_t>(f.codes[i])].push_back(v[i]);
  }
  CvTable out;
  for (std::size_t g = 0; g < by.size(); ++g) {
    const auto& xs = by[g];
    if (xs.size() < 2) {
      out.warnings.push_back("group '" + f.levels[g] + "' has fewer than 2 values and was skipped");
      continue;
    }
    GroupCv row;
    row.group = f.levels[g];
    row.n = xs.size();
    for (double x : xs) row.mean += x / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - row.mean) * (x - row.mean);
    row.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    row.cv = row.sd / row.mean;
    out.rows.push_back(row);
  }
  return out;
}

struct QqPoint {
  double theoretical = 0.0;
  double sample = 0.0;
};

/// Sorted sample against standard normal quantiles at (i + 0.5) / n.
inline std::vector<QqPoint> qq_pairs(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const boost::math::normal_distribution<double> z;
  std::vector<QqPoint> out(s.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = {boost::math::quantile(z, (static_cast<double>(i) + 0.5) / n), s[i]};
  return out;
}

struct Moments {
  double skewness = 0.0;
  double kurtosis = 0.0;  // not excess: 3 for a normal sample
};

inline Moments moments(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d / n;
    m3 += d * d * d / n;
    m4 += d * d * d * d / n;
  }
  if (!(m2 > 0.0)) return {};
  return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2)};
}

struct ResidualReport {
  std::vector<QqPoint> qq;
  std::vector<std::pair<double, double>> residual_vs_fitted;
  Moments moments;
};

inline ResidualReport residual_report(const FittedModel& m) {
  const VectorXd& r = m.residuals_whitened;
  const std::span<const double> rs(r.data(), static_cast<std::size_t>(r.size()));
  ResidualReport out;
  out.qq = qq_pairs(rs);
  out.moments = moments(rs);
  for (Index i = 0; i < r.size(); ++i) out.residual_vs_fitted.emplace_back(m.fitted(i), r(i));
  return out;
}

}  // namespace gammkit

#endif  // GAMMKIT_DIAGNOSTICS_HPP
