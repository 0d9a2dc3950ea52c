#include "saft/table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "saft/errors.hpp"

namespace saft {

std::string to_string(TaskKind task) {
  return task == TaskKind::Classification ? "classification" : "regression";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "classification" || text == "C") return TaskKind::Classification;
  if (text == "regression" || text == "R") return TaskKind::Regression;
  throw ConfigError("unknown task kind '" + std::string(text) +
                    "' (expected classification or regression)");
}

void Table::check() const {
  if (columns.empty()) throw DataError("table has no feature columns");
  if (names.size() != columns.size())
    throw DataError("table has " + std::to_string(columns.size()) +
                    " columns but " + std::to_string(names.size()) + " names");
  if (n_rows() < 2) throw DataError("table has fewer than 2 rows");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != n_rows())
      throw DataError("column '" + names[j] + "' has " +
                      std::to_string(columns[j].size()) + " rows, expected " +
                      std::to_string(n_rows()));
    if (!seen.insert(names[j]).second)
      throw DataError("duplicate column name '" + names[j] + "'");
  }
  if (task == TaskKind::Classification) {
    for (double y : target)
      if (y != std::floor(y))
        throw DataError("classification target holds non-integer label " +
                        format_number(y));
  }
}

Table Table::slice_rows(std::size_t begin, std::size_t end) const {
  Table out;
  out.names = names;
  out.target_name = target_name;
  out.task = task;
  out.columns.reserve(columns.size());
  for (const auto& col : columns)
    out.columns.emplace_back(col.begin() + static_cast<std::ptrdiff_t>(begin),
                             col.begin() + static_cast<std::ptrdiff_t>(end));
  out.target.assign(target.begin() + static_cast<std::ptrdiff_t>(begin),
                    target.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r'))
      c.remove_suffix(1);
  }
  return cells;
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

Table load_table(const std::filesystem::path& path, TaskKind task,
                 const std::string& target_name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  auto header_cells = split_commas(line);
  std::vector<std::string> header(header_cells.begin(), header_cells.end());

  auto target_it = std::find(header.begin(), header.end(), target_name);
  if (target_it == header.end())
    throw DataError("target column '" + target_name + "' not found in header of '" +
                    path.string() + "'");
  const auto target_col = static_cast<std::size_t>(target_it - header.begin());

  Table table;
  table.task = task;
  table.target_name = target_name;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != target_col) table.names.push_back(header[j]);
  table.columns.resize(table.names.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()));
    std::size_t feature = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double value = 0.0;
      if (!parse_double(cells[j], value))
        throw DataError("row " + std::to_string(row) + ", column \"" + header[j] +
                        "\": cannot parse '" + std::string(cells[j]) + "' as a number");
      if (j == target_col)
        table.target.push_back(value);
      else
        table.columns[feature++].push_back(value);
    }
  }
  if (row < 2)
    throw DataError("'" + path.string() + "' has fewer than 2 rows");
  table.check();
  return table;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& name : table.names) out << name << ',';
  out << table.target_name << '\n';
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (const auto& col : table.columns) out << format_number(col[i]) << ',';
    out << format_number(table.target[i]) << '\n';
  }
}

namespace {

void moments(const Column& values, double& mean, double& sd, bool& constant) {
  const auto n = static_cast<double>(values.size());
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  constant = *lo == *hi;
  double sum = 0.0;
  for (double v : values) sum += v;
  mean = sum / n;
  if (constant) {
    mean = *lo;
    sd = 0.0;
    return;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  sd = std::sqrt(ss / n);
}

void check_names(const Table& table, const NormParams& params) {
  if (table.names != params.names)
    throw DataError("normalization parameters were fit on different columns");
}

}  // namespace

NormParams zscore_fit(const Table& table) {
  NormParams p;
  p.names = table.names;
  for (const auto& col : table.columns) {
    double m = 0, s = 0;
    bool c = false;
    moments(col, m, s, c);
    p.mean.push_back(m);
    p.std.push_back(s);
    p.constant_mask.push_back(c);
  }
  if (table.task == TaskKind::Regression) {
    double m = 0, s = 0;
    bool c = false;
    moments(table.target, m, s, c);
    p.target_mean = m;
    p.target_std = s;
  }
  return p;
}

Table zscore_apply(const Table& table, const NormParams& params) {
  check_names(table, params);
  Table out = table;
  for (std::size_t j = 0; j < out.columns.size(); ++j) {
    for (double& v : out.columns[j])
      v = params.constant_mask[j] ? 0.0 : (v - params.mean[j]) / params.std[j];
  }
  if (table.task == TaskKind::Regression && params.target_mean) {
    for (double& v : out.target)
      v = *params.target_std == 0.0 ? 0.0 : (v - *params.target_mean) / *params.target_std;
  }
  return out;
}

Table zscore_invert(const Table& table, const NormParams& params) {
  check_names(table, params);
  Table out = table;
  for (std::size_t j = 0; j < out.columns.size(); ++j)
    for (double& v : out.columns[j]) v = v * params.std[j] + params.mean[j];
  if (table.task == TaskKind::Regression && params.target_mean) {
    for (double& v : out.target) v = v * *params.target_std + *params.target_mean;
  }
  return out;
}

double ks_critical_coefficient(double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0));
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b,
                       double confidence) {
  if (a.size() < 2 || b.size() < 2)
    throw DataError("KS test needs at least 2 observations per sample");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DataError("KS confidence must lie in (0, 1)");

  std::vector<double> xs(a.begin(), a.end());
  std::vector<double> ys(b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const auto n = static_cast<double>(xs.size());
  const auto m = static_cast<double>(ys.size());

  // Walk the pooled sample points; ties advance both cursors together.
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const double x = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == x) ++i;
    while (j < ys.size() && ys[j] == x) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }

  KsResult r;
  r.statistic = d;
  const double critical =
      ks_critical_coefficient(1.0 - confidence) * std::sqrt((n + m) / (n * m));
  r.reject = d > critical;
  return r;
}

SplitResult shift_split(const Table& table, double train_frac, double confidence) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw DataError("train_frac must lie in (0, 1)");
  if (table.n_rows() < 10) throw DataError("shift_split needs at least 10 rows");
  const std::size_t n = table.n_rows();
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n) + 1e-9));
  if (n_train < 2 || n - n_train < 2)
    throw DataError("train_frac leaves fewer than 2 rows on one side of the split");

  SplitResult result;
  result.confidence = confidence;
  result.train = table.slice_rows(0, n_train);
  result.test = table.slice_rows(n_train, n);

  for (std::size_t j = 0; j < table.n_features(); ++j) {
    const auto& col = table.columns[j];
    std::span<const double> head(col.data(), n_train);
    std::span<const double> tail(col.data() + n_train, n - n_train);
    const auto ks = ks_two_sample(head, tail, confidence);
    if (ks.reject) {
      result.shifted_feature = j;
      result.ks_statistic = ks.statistic;
      return result;
    }
    result.ks_statistic = std::max(result.ks_statistic, ks.statistic);
  }
  return result;
}

}  // namespace saft
