#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saft {

enum class TaskKind { Classification, Regression };

std::string to_string(TaskKind task);
TaskKind parse_task_kind(std::string_view text);

using Column = std::vector<double>;

// Column-major numeric dataset: feature columns plus one target column.
struct Table {
  std::vector<Column> columns;
  std::vector<std::string> names;
  Column target;
  std::string target_name = "target";
  TaskKind task = TaskKind::Regression;

  std::size_t n_rows() const { return target.size(); }
  std::size_t n_features() const { return columns.size(); }

  // Throws DataError when the invariants (equal lengths, >= 2 rows,
  // >= 1 feature, unique names, integer class labels) do not hold.
  void check() const;

  // Rows [begin, end) as a new table.
  Table slice_rows(std::size_t begin, std::size_t end) const;
};

Table load_table(const std::filesystem::path& path, TaskKind task,
                 const std::string& target_name);

// Writes features followed by the target column (target last).
void write_csv(const std::filesystem::path& path, const Table& table);

// Shortest round-trip text for a double.
std::string format_number(double value);

struct NormParams {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> std;  // population definition
  std::vector<bool> constant_mask;
  // Present for regression tasks only.
  std::optional<double> target_mean;
  std::optional<double> target_std;
};

NormParams zscore_fit(const Table& table);
Table zscore_apply(const Table& table, const NormParams& params);
Table zscore_invert(const Table& table, const NormParams& params);

struct KsResult {
  double statistic = 0.0;
  bool reject = false;
};

// Asymptotic two-sample critical coefficient c(alpha) = sqrt(-ln(alpha/2)/2).
double ks_critical_coefficient(double alpha);

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b,
                       double confidence);

struct SplitResult {
  Table train;
  Table test;
  std::optional<std::size_t> shifted_feature;
  double ks_statistic = 0.0;
  double confidence = 0.95;
};

SplitResult shift_split(const Table& table, double train_frac = 0.8,
                        double confidence = 0.95);

}  // namespace saft
