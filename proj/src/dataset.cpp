#include "ivcate/dataset.hpp"

#include "ivcate/error.hpp"
#include "ivcate/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace ivcate {

namespace {

bool is_zero_one(const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  }
  return true;
}

bool all_finite(const Vector& v) { return v.array().isFinite().all(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

void IvDataset::validate() const {
  const Index rows = y.size();
  if (x.rows() != rows || t.size() != rows || z.size() != rows) {
    fail(ErrorKind::validation, "X, T, Z and Y must have the same number of rows");
  }
  if (rows < 4) fail(ErrorKind::validation, "at least 4 rows are required, got " + std::to_string(rows));
  if (static_cast<Index>(column_names.size()) != x.cols()) {
    fail(ErrorKind::validation, "column_names does not match the feature count");
  }
  if (!x.array().isFinite().all() || !all_finite(t) || !all_finite(z) || !all_finite(y)) {
    fail(ErrorKind::validation, "non-finite entries in dataset");
  }
  if (binary) {
    if (!is_zero_one(t)) fail(ErrorKind::validation, "binary flag set but treatment is not 0/1");
    if (!is_zero_one(z)) fail(ErrorKind::validation, "binary flag set but instrument is not 0/1");
  }
}

IvDataset IvDataset::subset(const std::vector<Index>& rows) const {
  IvDataset out;
  const Index m = static_cast<Index>(rows.size());
  out.x.resize(m, x.cols());
  out.t.resize(m);
  out.z.resize(m);
  out.y.resize(m);
  for (Index i = 0; i < m; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    out.x.row(i) = x.row(r);
    out.t[i] = t[r];
    out.z[i] = z[r];
    out.y[i] = y[r];
  }
  out.column_names = column_names;
  out.binary = binary;
  return out;
}

Normalization parse_normalization(const std::string& text) {
  if (text == "none") return Normalization::none;
  if (text == "quantile") return Normalization::quantile;
  if (text == "standardize") return Normalization::standardize;
  fail(ErrorKind::argument, "unknown normalization '" + text + "' (expected none|quantile|standardize)");
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::quantile: return "quantile";
    case Normalization::standardize: return "standardize";
  }
  return "none";
}

void RawTable::add_numeric(std::string name, std::vector<double> values) {
  if (columns.empty()) rows = static_cast<Index>(values.size());
  if (static_cast<Index>(values.size()) != rows) fail(ErrorKind::internal, "column length mismatch");
  names.push_back(std::move(name));
  columns.emplace_back(std::move(values));
}

void RawTable::add_text(std::string name, std::vector<std::string> values) {
  if (columns.empty()) rows = static_cast<Index>(values.size());
  if (static_cast<Index>(values.size()) != rows) fail(ErrorKind::internal, "column length mismatch");
  names.push_back(std::move(name));
  columns.emplace_back(std::move(values));
}

RawTable read_raw_csv(std::istream& in, const std::vector<std::string>& text_columns) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, "empty CSV input: header row missing");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (h.empty()) fail(ErrorKind::schema, "empty column name in header");
      if (!seen.insert(h).second) fail(ErrorKind::schema, "duplicate column '" + h + "'");
    }
  }
  const std::size_t cols = header.size();
  std::vector<bool> is_text(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    is_text[c] = std::find(text_columns.begin(), text_columns.end(), header[c]) != text_columns.end();
  }
  std::vector<std::vector<double>> num(cols);
  std::vector<std::vector<std::string>> txt(cols);
  Index row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != cols) {
      fail(ErrorKind::parse, "row " + std::to_string(row) + ": expected " + std::to_string(cols) +
                                 " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      std::string cell = trim(cells[c]);
      if (is_text[c]) {
        txt[c].push_back(std::move(cell));
        continue;
      }
      double v = 0.0;
      if (!parse_double(cell, v)) {
        fail(ErrorKind::parse, "row " + std::to_string(row) + ", column '" + header[c] +
                                   "': cannot parse '" + cell + "' as a number");
      }
      if (!std::isfinite(v)) {
        fail(ErrorKind::parse, "row " + std::to_string(row) + ", column '" + header[c] +
                                   "': non-finite value '" + cell + "'");
      }
      num[c].push_back(v);
    }
  }
  RawTable table;
  table.rows = row;
  for (std::size_t c = 0; c < cols; ++c) {
    table.names.push_back(header[c]);
    if (is_text[c]) {
      table.columns.emplace_back(std::move(txt[c]));
    } else {
      table.columns.emplace_back(std::move(num[c]));
    }
  }
  return table;
}

namespace {

std::size_t find_column(const RawTable& table, const std::string& name, const char* role) {
  auto it = std::find(table.names.begin(), table.names.end(), name);
  if (it == table.names.end()) {
    fail(ErrorKind::schema, std::string("missing ") + role + " column '" + name + "'");
  }
  return static_cast<std::size_t>(it - table.names.begin());
}

Vector numeric_column(const RawTable& table, std::size_t c, const char* role) {
  const auto* v = std::get_if<std::vector<double>>(&table.columns[c]);
  if (v == nullptr) {
    fail(ErrorKind::schema, std::string(role) + " column '" + table.names[c] + "' is not numeric");
  }
  return Eigen::Map<const Vector>(v->data(), static_cast<Index>(v->size()));
}

}  // namespace

IvDataset build_dataset(const RawTable& table, const Schema& schema, Matrix* raw_features) {
  const std::size_t iy = find_column(table, schema.outcome, "outcome");
  const std::size_t it = find_column(table, schema.treatment, "treatment");
  const std::size_t iz = find_column(table, schema.instrument, "instrument");

  std::vector<std::size_t> feature_idx;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < table.names.size(); ++c) {
      if (c != iy && c != it && c != iz) feature_idx.push_back(c);
    }
  } else {
    for (const auto& f : schema.features) feature_idx.push_back(find_column(table, f, "feature"));
  }
  if (feature_idx.empty()) fail(ErrorKind::schema, "no feature columns");

  std::map<std::string, std::string> baselines;
  for (const auto& c : schema.categorical) baselines[c.name] = c.baseline;

  std::vector<Vector> cols;
  std::vector<std::string> names;
  for (std::size_t c : feature_idx) {
    const std::string& name = table.names[c];
    if (const auto* text = std::get_if<std::vector<std::string>>(&table.columns[c])) {
      auto b = baselines.find(name);
      if (b == baselines.end()) {
        fail(ErrorKind::schema, "text column '" + name + "' has no declared baseline level");
      }
      std::set<std::string> levels(text->begin(), text->end());
      if (!levels.count(b->second)) {
        fail(ErrorKind::schema, "baseline level '" + b->second + "' not present in column '" + name + "'");
      }
      for (const auto& level : levels) {
        if (level == b->second) continue;
        Vector dummy(table.rows);
        for (Index i = 0; i < table.rows; ++i) {
          dummy[i] = (*text)[static_cast<std::size_t>(i)] == level ? 1.0 : 0.0;
        }
        cols.push_back(std::move(dummy));
        names.push_back(name + "_" + level);
      }
    } else {
      if (baselines.count(name)) {
        // Numeric-coded categorical: encode by the numeric level labels.
        const auto& v = std::get<std::vector<double>>(table.columns[c]);
        std::set<double> levels(v.begin(), v.end());
        double base = 0.0;
        const std::string& label = baselines[name];
        if (!parse_double(label, base) || !levels.count(base)) {
          fail(ErrorKind::schema, "baseline level '" + baselines[name] + "' not present in column '" + name + "'");
        }
        for (double level : levels) {
          if (level == base) continue;
          Vector dummy(table.rows);
          for (Index i = 0; i < table.rows; ++i) dummy[i] = v[static_cast<std::size_t>(i)] == level ? 1.0 : 0.0;
          cols.push_back(std::move(dummy));
          names.push_back(name + "_" + format_double(level));
        }
      } else {
        cols.push_back(numeric_column(table, c, "feature"));
        names.push_back(name);
      }
    }
  }

  IvDataset data;
  data.y = numeric_column(table, iy, "outcome");
  data.t = numeric_column(table, it, "treatment");
  data.z = numeric_column(table, iz, "instrument");
  data.x.resize(table.rows, static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) data.x.col(static_cast<Index>(j)) = cols[j];
  data.column_names = std::move(names);
  data.binary = schema.binary;
  if (raw_features != nullptr) *raw_features = data.x;

  switch (schema.normalization) {
    case Normalization::none: break;
    case Normalization::quantile: data.x = quantile_normalize(data.x, schema.quantiles); break;
    case Normalization::standardize: data.x = standardize_continuous(data.x); break;
  }
  data.validate();
  return data;
}

IvDataset read_csv(std::istream& in, const Schema& schema) {
  std::vector<std::string> text;
  for (const auto& c : schema.categorical) text.push_back(c.name);
  return build_dataset(read_raw_csv(in, text), schema);
}

IvDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::argument, "cannot open data file '" + path.string() + "'");
  return read_csv(in, schema);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) fail(ErrorKind::internal, "number formatting failed");
  return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const IvDataset& data) {
  out << "y,t,z";
  for (const auto& name : data.column_names) out << ',' << name;
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << format_double(data.y[i]) << ',' << format_double(data.t[i]) << ',' << format_double(data.z[i]);
    for (Index j = 0; j < data.d(); ++j) out << ',' << format_double(data.x(i, j));
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const IvDataset& data) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::argument, "cannot write '" + path.string() + "'");
  write_csv(out, data);
}

namespace {

double discretize(double frac, int q) {
  return std::round(frac * (q - 1)) / static_cast<double>(q - 1);
}

}  // namespace

QuantileNormalizer::QuantileNormalizer(const Matrix& x, int quantiles) : quantiles_(quantiles) {
  if (quantiles < 2) fail(ErrorKind::argument, "quantile count must be >= 2");
  const Index n = x.rows();
  values_.resize(static_cast<std::size_t>(x.cols()));
  levels_.resize(static_cast<std::size_t>(x.cols()));
  std::vector<double> col(static_cast<std::size_t>(n));
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    std::sort(col.begin(), col.end());
    auto& vals = values_[static_cast<std::size_t>(j)];
    auto& lev = levels_[static_cast<std::size_t>(j)];
    std::size_t i = 0;
    while (i < col.size()) {
      std::size_t k = i;
      while (k + 1 < col.size() && col[k + 1] == col[i]) ++k;
      vals.push_back(col[i]);
      // mid-rank of the tie block
      lev.push_back(n > 1 ? 0.5 * static_cast<double>(i + k) / static_cast<double>(n - 1) : 0.0);
      i = k + 1;
    }
    if (vals.size() == 1) lev[0] = 0.0;
  }
}

Matrix QuantileNormalizer::transform(const Matrix& x) const {
  if (x.cols() != static_cast<Index>(values_.size())) {
    fail(ErrorKind::argument, "normalizer fitted on a different column count");
  }
  Matrix out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const auto& vals = values_[static_cast<std::size_t>(j)];
    const auto& lev = levels_[static_cast<std::size_t>(j)];
    for (Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      double frac;
      auto it = std::lower_bound(vals.begin(), vals.end(), v);
      if (it == vals.end()) {
        frac = lev.back();
      } else if (*it == v || it == vals.begin()) {
        frac = lev[static_cast<std::size_t>(it - vals.begin())];
      } else {
        const auto hi = static_cast<std::size_t>(it - vals.begin());
        const double w = (v - vals[hi - 1]) / (vals[hi] - vals[hi - 1]);
        frac = lev[hi - 1] + w * (lev[hi] - lev[hi - 1]);
      }
      out(i, j) = vals.size() == 1 ? 0.0 : discretize(frac, quantiles_);
    }
  }
  return out;
}

Matrix quantile_normalize(const Matrix& x, int quantiles) {
  return QuantileNormalizer(x, quantiles).transform(x);
}

Matrix standardize_continuous(const Matrix& x) {
  Matrix out = x;
  for (Index j = 0; j < x.cols(); ++j) {
    std::set<double> distinct;
    for (Index i = 0; i < x.rows() && distinct.size() <= 2; ++i) distinct.insert(x(i, j));
    if (distinct.size() <= 2) continue;
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().mean());
    out.col(j) = (x.col(j).array() - mean) / sd;
  }
  return out;
}

std::vector<Index> SplitPlan::test_rows(int f) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == f) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

std::vector<Index> SplitPlan::train_rows(int f) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != f) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

SplitPlan make_splits(Index n, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::argument, "fold count must be >= 2");
  if (n < k) fail(ErrorKind::argument, "cannot split " + std::to_string(n) + " rows into " + std::to_string(k) + " folds");
  SplitPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) plan.fold[static_cast<std::size_t>(i)] = static_cast<int>(i % k);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n) * 1315423911ULL + static_cast<std::uint64_t>(k)));
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(i + 1)));
    std::swap(plan.fold[static_cast<std::size_t>(i)], plan.fold[static_cast<std::size_t>(j)]);
  }
  return plan;
}

}  // namespace ivcate
