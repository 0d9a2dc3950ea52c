#include "saft/synthetic.hpp"

#include <cmath>
#include <random>

namespace saft::synthetic {

Table shift_benchmark(std::uint64_t seed, std::size_t rows) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0), noise(0.0, 0.1);
  Table t;
  t.task = TaskKind::Regression;
  t.target_name = "y";
  t.columns.assign(5, Column(rows));
  for (int j = 0; j < 5; ++j) t.names.push_back("f" + std::to_string(j));
  t.target.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double drift = 3.0 * static_cast<double>(i) / static_cast<double>(rows);
    for (int j = 0; j < 5; ++j) t.columns[j][i] = n01(rng);
    t.columns[3][i] = 0.7 * t.columns[3][i] + drift;
    t.target[i] = t.columns[1][i] * t.columns[2][i] + std::sin(t.columns[3][i]) + noise(rng);
  }
  return t;
}

Table product_table(std::uint64_t seed, std::size_t rows) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  Table t;
  t.task = TaskKind::Regression;
  t.target_name = "y";
  t.names = {"f0", "f1", "f2"};
  t.columns.assign(3, Column(rows));
  t.target.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (auto& c : t.columns) c[i] = u(rng);
    t.target[i] = t.columns[0][i] * t.columns[1][i] + noise(rng);
  }
  return t;
}

}  // namespace saft::synthetic
