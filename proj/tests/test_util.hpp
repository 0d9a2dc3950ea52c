#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "saft/table.hpp"

namespace saft::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("saft_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline Table random_table(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                          TaskKind task = TaskKind::Regression) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-50.0, 50.0);
  Table t;
  t.task = task;
  for (std::size_t j = 0; j < cols; ++j) {
    const double s = scale(rng), m = shift(rng);
    Column c(rows);
    for (auto& v : c) v = m + s * n01(rng);
    t.columns.push_back(std::move(c));
    t.names.push_back("x" + std::to_string(j));
  }
  t.target.resize(rows);
  for (auto& v : t.target) v = task == TaskKind::Regression ? n01(rng) : (n01(rng) > 0 ? 1.0 : 0.0);
  return t;
}

}  // namespace saft::testing
