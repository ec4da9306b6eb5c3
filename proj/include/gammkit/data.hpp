#ifndef GAMMKIT_DATA_HPP
#define GAMMKIT_DATA_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "gammkit/error.hpp"

namespace gammkit {

struct NumericColumn {
  std::vector<double> values;
};

/// Level indices into a level-name list.
struct FactorColumn {
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const { return codes.size(); }
  std::size_t n_levels() const { return levels.size(); }
  const std::string& label(std::size_t row) const { return levels[static_cast<std::size_t>(codes[row])]; }

  std::optional<int> code_of(const std::string& level) const {
    auto it = std::find(levels.begin(), levels.end(), level);
    if (it == levels.end()) return std::nullopt;
    return static_cast<int>(it - levels.begin());
  }
};

using Column = std::variant<NumericColumn, FactorColumn>;

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Numbers compare numerically, everything else lexicographically; numbers first.
inline bool level_less(const std::string& a, const std::string& b) {
  auto na = parse_double(a);
  auto nb = parse_double(b);
  if (na && nb) return *na < *nb || (*na == *nb && a < b);
  if (na != nb) return na.has_value();
  return a < b;
}

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

}  // namespace detail

inline FactorColumn make_factor(const std::vector<std::string>& labels) {
  FactorColumn f;
  std::vector<std::string> levels(labels.begin(), labels.end());
  std::sort(levels.begin(), levels.end(), detail::level_less);
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  f.levels = levels;
  f.codes.reserve(labels.size());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < levels.size(); ++i) index[levels[i]] = static_cast<int>(i);
  for (const auto& l : labels) f.codes.push_back(index.at(l));
  return f;
}

/// (x - offset) / scale; kept so prediction grids can be mapped back.
struct AffineMap {
  double offset = 0.0;
  double scale = 1.0;

  double forward(double x) const { return (x - offset) / scale; }
  double back(double u) const { return offset + scale * u; }
};

enum class TransformKind { Identity, Log, Neg1000Over, Power };

struct ResponseTransform {
  TransformKind kind = TransformKind::Identity;
  double power = 1.0;
};

/// Column-oriented observation table. Immutable in practice: every
/// transforming operation returns a new table.
class DataTable {
 public:
  std::size_t n_rows() const { return n_rows_; }
  const std::vector<std::string>& names() const { return names_; }
  bool has(const std::string& name) const { return columns_.count(name) > 0; }

  bool is_numeric(const std::string& name) const {
    auto it = columns_.find(name);
    return it != columns_.end() && std::holds_alternative<NumericColumn>(it->second);
  }
  bool is_factor(const std::string& name) const {
    auto it = columns_.find(name);
    return it != columns_.end() && std::holds_alternative<FactorColumn>(it->second);
  }

  const NumericColumn& numeric(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) fail(ErrorKind::Schema, "no column '" + name + "'");
    if (auto* c = std::get_if<NumericColumn>(&it->second)) return *c;
    fail(ErrorKind::Schema, "column '" + name + "' is not numeric");
  }
  const FactorColumn& factor(const std::string& name) const {
    auto it = columns_.find(name);
    if (it == columns_.end()) fail(ErrorKind::Schema, "no column '" + name + "'");
    if (auto* c = std::get_if<FactorColumn>(&it->second)) return *c;
    fail(ErrorKind::Schema, "column '" + name + "' is not a factor");
  }
  const std::vector<double>& values(const std::string& name) const { return numeric(name).values; }

  void set_numeric(const std::string& name, std::vector<double> values) {
    check_length(name, values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i]))
        fail(ErrorKind::Parse, "non-finite value in column '" + name + "' at row " + std::to_string(i));
    put(name, NumericColumn{std::move(values)});
  }

  void set_factor(const std::string& name, FactorColumn column) {
    check_length(name, column.size());
    for (int c : column.codes)
      if (c < 0 || static_cast<std::size_t>(c) >= column.levels.size())
        fail(ErrorKind::Schema, "invalid level index in factor '" + name + "'");
    put(name, std::move(column));
  }

  void set_factor(const std::string& name, const std::vector<std::string>& labels) {
    set_factor(name, make_factor(labels));
  }

  /// Declares the time-series structure; (series, order) pairs must be unique.
  void set_series(const std::string& series_key, const std::string& order_key) {
    const auto& s = factor(series_key);
    const auto& o = numeric(order_key);
    std::vector<std::pair<int, double>> keys;
    keys.reserve(n_rows_);
    for (std::size_t i = 0; i < n_rows_; ++i) keys.emplace_back(s.codes[i], o.values[i]);
    std::sort(keys.begin(), keys.end());
    if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
      fail(ErrorKind::Spec, "duplicate (" + series_key + ", " + order_key + ") pairs");
    series_key_ = series_key;
    order_key_ = order_key;
  }

  const std::optional<std::string>& series_key() const { return series_key_; }
  const std::optional<std::string>& order_key() const { return order_key_; }

  std::optional<AffineMap> scale_map(const std::string& name) const {
    auto it = scale_maps_.find(name);
    if (it == scale_maps_.end()) return std::nullopt;
    return it->second;
  }
  void set_scale_map(const std::string& name, AffineMap map) { scale_maps_[name] = map; }

  std::optional<ResponseTransform> transform(const std::string& name) const {
    auto it = transforms_.find(name);
    if (it == transforms_.end()) return std::nullopt;
    return it->second;
  }
  void set_transform(const std::string& name, ResponseTransform t) { transforms_[name] = t; }

  std::size_t dropped_count() const { return dropped_; }
  void set_dropped_count(std::size_t n) { dropped_ = n; }

  DataTable select_rows(std::span<const std::size_t> rows) const {
    DataTable out;
    out.n_rows_ = rows.size();
    out.names_ = names_;
    for (const auto& [name, col] : columns_) {
      if (const auto* num = std::get_if<NumericColumn>(&col)) {
        NumericColumn c;
        c.values.reserve(rows.size());
        for (auto r : rows) c.values.push_back(num->values.at(r));
        out.columns_.emplace(name, std::move(c));
      } else {
        const auto& fac = std::get<FactorColumn>(col);
        FactorColumn c;
        c.levels = fac.levels;
        c.codes.reserve(rows.size());
        for (auto r : rows) c.codes.push_back(fac.codes.at(r));
        out.columns_.emplace(name, std::move(c));
      }
    }
    out.series_key_ = series_key_;
    out.order_key_ = order_key_;
    out.scale_maps_ = scale_maps_;
    out.transforms_ = transforms_;
    return out;
  }

  bool operator==(const DataTable& other) const {
    if (n_rows_ != other.n_rows_ || names_ != other.names_) return false;
    for (const auto& [name, col] : columns_) {
      auto it = other.columns_.find(name);
      if (it == other.columns_.end() || col.index() != it->second.index()) return false;
      if (const auto* a = std::get_if<NumericColumn>(&col)) {
        if (a->values != std::get<NumericColumn>(it->second).values) return false;
      } else {
        const auto& fa = std::get<FactorColumn>(col);
        const auto& fb = std::get<FactorColumn>(it->second);
        if (fa.codes != fb.codes || fa.levels != fb.levels) return false;
      }
    }
    return series_key_ == other.series_key_ && order_key_ == other.order_key_;
  }

 private:
  void check_length(const std::string& name, std::size_t n) {
    if (names_.empty() || (names_.size() == 1 && names_.front() == name)) {
      n_rows_ = n;
      return;
    }
    if (n != n_rows_)
      fail(ErrorKind::Shape, "column '" + name + "' has " + std::to_string(n) + " rows, table has " +
                                 std::to_string(n_rows_));
  }

  void put(const std::string& name, Column col) {
    if (!columns_.count(name)) names_.push_back(name);
    columns_.insert_or_assign(name, std::move(col));
  }

  std::size_t n_rows_ = 0;
  std::vector<std::string> names_;
  std::map<std::string, Column> columns_;
  std::optional<std::string> series_key_;
  std::optional<std::string> order_key_;
  std::map<std::string, AffineMap> scale_maps_;
  std::map<std::string, ResponseTransform> transforms_;
  std::size_t dropped_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

enum class ColumnType { Numeric, Factor };

struct CsvSchema {
  std::vector<std::pair<std::string, ColumnType>> columns;
  std::optional<std::string> series_key;
  std::optional<std::string> order_key;

  CsvSchema& numeric(const std::string& name) {
    columns.emplace_back(name, ColumnType::Numeric);
    return *this;
  }
  CsvSchema& factor(const std::string& name) {
    columns.emplace_back(name, ColumnType::Factor);
    return *this;
  }
  CsvSchema& series(const std::string& series, const std::string& order) {
    series_key = series;
    order_key = order;
    return *this;
  }
};

namespace detail {

// RFC-4180 records; quoted fields may contain separators, quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv_records(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  char c;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row.front().empty())) records.push_back(row);
    row.clear();
  };
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) fail(ErrorKind::Parse, "unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return records;
}

inline bool is_missing(const std::string& s) {
  std::string_view v = s;
  while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
  while (!v.empty() && v.back() == ' ') v.remove_suffix(1);
  return v.empty() || v == "NA";
}

}  // namespace detail

/// Reads a header-first CSV stream. Rows with a missing value in any schema
/// column are dropped (listwise) and counted in dropped_count().
inline DataTable read_csv(std::istream& in, const CsvSchema& schema) {
  auto records = detail::parse_csv_records(in);
  if (records.empty()) fail(ErrorKind::Schema, "missing header row");
  const auto& header = records.front();
  std::vector<std::size_t> index;
  for (const auto& [name, type] : schema.columns) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::Schema, "column '" + name + "' not in header");
    index.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  const std::size_t ncol = schema.columns.size();
  std::vector<std::vector<double>> nums(ncol);
  std::vector<std::vector<std::string>> labels(ncol);
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    bool missing = false;
    for (std::size_t j = 0; j < ncol; ++j)
      if (index[j] >= rec.size() || detail::is_missing(rec[index[j]])) missing = true;
    if (missing) {
      ++dropped;
      continue;
    }
    for (std::size_t j = 0; j < ncol; ++j) {
      const auto& cell = rec[index[j]];
      if (schema.columns[j].second == ColumnType::Numeric) {
        auto v = detail::parse_double(cell);
        if (!v || !std::isfinite(*v))
          fail(ErrorKind::Parse, "cannot parse '" + cell + "' in column '" + schema.columns[j].first +
                                     "' at row " + std::to_string(r));
        nums[j].push_back(*v);
      } else {
        labels[j].push_back(cell);
      }
    }
  }
  const std::size_t kept = records.size() - 1 - dropped;
  if (kept == 0) fail(ErrorKind::EmptyData, "no usable rows");

  DataTable table;
  for (std::size_t j = 0; j < ncol; ++j) {
    const auto& name = schema.columns[j].first;
    if (schema.columns[j].second == ColumnType::Numeric)
      table.set_numeric(name, std::move(nums[j]));
    else
      table.set_factor(name, labels[j]);
  }
  if (schema.series_key) {
    if (!schema.order_key) fail(ErrorKind::Schema, "series key requires an order key");
    table.set_series(*schema.series_key, *schema.order_key);
  }
  table.set_dropped_count(dropped);
  return table;
}

inline DataTable load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return read_csv(in, schema);
}

namespace detail {
inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

inline void write_csv(std::ostream& out, const DataTable& table) {
  const auto& names = table.names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << detail::csv_quote(names[j]);
  out << '\n';
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j) out << ',';
      if (table.is_numeric(names[j]))
        out << detail::format_double(table.values(names[j])[i]);
      else
        out << detail::csv_quote(table.factor(names[j]).label(i));
    }
    out << '\n';
  }
}

/// Infers a schema from a CSV header: columns whose every non-missing cell
/// parses as a number are numeric, everything else a factor. `factors`
/// forces the listed columns to be factors.
inline CsvSchema infer_schema(std::istream& in, const std::vector<std::string>& factors = {}) {
  auto records = detail::parse_csv_records(in);
  if (records.empty()) fail(ErrorKind::Schema, "missing header row");
  CsvSchema schema;
  const auto& header = records.front();
  for (std::size_t j = 0; j < header.size(); ++j) {
    bool numeric = std::find(factors.begin(), factors.end(), header[j]) == factors.end();
    for (std::size_t r = 1; numeric && r < records.size(); ++r) {
      if (j >= records[r].size() || detail::is_missing(records[r][j])) continue;
      if (!detail::parse_double(records[r][j])) numeric = false;
    }
    schema.columns.emplace_back(header[j], numeric ? ColumnType::Numeric : ColumnType::Factor);
  }
  return schema;
}

// ---------------------------------------------------------------------------
// Transforms

/// Maps a numeric column onto [0, 1] and records the affine map.
inline DataTable rescale_unit(const DataTable& table, const std::string& column) {
  const auto& x = table.values(column);
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (!(*hi > *lo)) fail(ErrorKind::DegenerateScale, "column '" + column + "' is constant");
  AffineMap step{*lo, *hi - *lo};
  std::vector<double> scaled(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) scaled[i] = step.forward(x[i]);
  DataTable out = table;
  out.set_numeric(column, std::move(scaled));
  AffineMap total = step;
  if (auto prior = table.scale_map(column)) total = {prior->offset + prior->scale * step.offset, prior->scale * step.scale};
  out.set_scale_map(column, total);
  return out;
}

inline double apply_transform(double v, const ResponseTransform& t) {
  switch (t.kind) {
    case TransformKind::Identity: return v;
    case TransformKind::Log: return std::log(v);
    case TransformKind::Neg1000Over: return -1000.0 / v;
    case TransformKind::Power: return t.power == 0.0 ? std::log(v) : std::pow(v, t.power);
  }
  return v;
}

inline DataTable transform_response(const DataTable& table, const std::string& column, ResponseTransform kind) {
  if (kind.kind == TransformKind::Identity) return table;
  const auto& y = table.values(column);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > 0.0))
      fail(ErrorKind::Domain, "nonpositive value " + detail::format_double(y[i]) + " in '" + column + "' at row " +
                                  std::to_string(i));
    out[i] = apply_transform(y[i], kind);
  }
  DataTable t = table;
  t.set_numeric(column, std::move(out));
  t.set_transform(column, kind);
  return t;
}

struct BoxCoxProfile {
  double best_lambda = 1.0;
  std::vector<double> lambdas;
  std::vector<double> scores;
};

inline std::vector<double> default_boxcox_grid() {
  std::vector<double> grid(41);
  for (int i = 0; i < 41; ++i) grid[static_cast<std::size_t>(i)] = -2.0 + 0.1 * i;
  return grid;
}

/// Profile log-likelihood of the single-parameter Box-Cox family under an
/// intercept-only Gaussian model: maximized Gaussian log-likelihood of
/// (y^l - 1)/l (log y at l = 0) plus the Jacobian (l - 1) * sum(log y).
inline BoxCoxProfile boxcox_profile(std::span<const double> y, std::vector<double> grid = default_boxcox_grid()) {
  if (grid.empty()) fail(ErrorKind::Domain, "empty lambda grid");
  if (y.size() < 2) fail(ErrorKind::Length, "need at least two observations");
  double sum_log = 0.0;
  for (double v : y) {
    if (!(v > 0.0)) fail(ErrorKind::Domain, "Box-Cox requires strictly positive values");
    sum_log += std::log(v);
  }
  const double n = static_cast<double>(y.size());
  BoxCoxProfile out;
  out.lambdas = grid;
  std::vector<double> z(y.size());
  for (double lambda : grid) {
    for (std::size_t i = 0; i < y.size(); ++i)
      z[i] = std::abs(lambda) < 1e-12 ? std::log(y[i]) : (std::pow(y[i], lambda) - 1.0) / lambda;
    double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : z) ss += (v - mean) * (v - mean);
    double sigma2 = ss / n;
    out.scores.push_back(-0.5 * n * (std::log(2.0 * M_PI * sigma2) + 1.0) + (lambda - 1.0) * sum_log);
  }
  auto best = std::max_element(out.scores.begin(), out.scores.end());
  out.best_lambda = grid[static_cast<std::size_t>(best - out.scores.begin())];
  return out;
}

}  // namespace gammkit

#endif  // GAMMKIT_DATA_HPP
