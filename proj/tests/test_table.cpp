#include <cmath>
#include <random>

#include "doctest.h"
#include "saft/errors.hpp"
#include "saft/table.hpp"
#include "test_util.hpp"

using namespace saft;
using saft::testing::TempDir;
using saft::testing::write_text;

TEST_CASE("load_table reads a small CSV and drops the target from the features") {
  TempDir dir("table");
  write_text(dir / "a.csv", "a,b,y\n1,2,0\n3,4,1\n5,6,0\n");
  auto t = load_table(dir / "a.csv", TaskKind::Classification, "y");
  CHECK(t.n_rows() == 3);
  CHECK(t.n_features() == 2);
  CHECK(t.names == std::vector<std::string>{"a", "b"});
  CHECK(t.columns[1] == Column{2, 4, 6});
  CHECK(t.target == Column{0, 1, 0});
}

TEST_CASE("load_table reports the row and column of a non-numeric cell") {
  TempDir dir("table");
  write_text(dir / "bad.csv", "a,b,y\n1,abc,0\n3,4,1\n");
  try {
    load_table(dir / "bad.csv", TaskKind::Regression, "y");
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 1") != std::string::npos);
    CHECK(what.find("\"b\"") != std::string::npos);
  }
}

TEST_CASE("load_table error paths") {
  TempDir dir("table");
  write_text(dir / "one.csv", "a,y\n1,0\n");
  CHECK_THROWS_WITH_AS(load_table(dir / "one.csv", TaskKind::Regression, "y"),
                       doctest::Contains("fewer than 2 rows"), DataError);
  write_text(dir / "two.csv", "a,y\n1,0\n2,1\n");
  CHECK_THROWS_AS(load_table(dir / "two.csv", TaskKind::Regression, "target"), DataError);
  CHECK_THROWS_AS(load_table(dir / "missing.csv", TaskKind::Regression, "y"), DataError);
  write_text(dir / "empty_cell.csv", "a,y\n1,0\n,1\n");
  CHECK_THROWS_AS(load_table(dir / "empty_cell.csv", TaskKind::Regression, "y"), DataError);
}

TEST_CASE("write_csv round-trips through load_table bit-exactly") {
  TempDir dir("table");
  std::mt19937_64 rng(3);
  auto t = saft::testing::random_table(20, 3, rng);
  write_csv(dir / "t.csv", t);
  auto back = load_table(dir / "t.csv", TaskKind::Regression, t.target_name);
  CHECK(back.columns == t.columns);
  CHECK(back.target == t.target);
}

TEST_CASE("zscore_fit uses population moments") {
  Table t;
  t.columns = {{1, 2, 3}, {5, 5, 5}, {0, 0, 0}};
  t.names = {"a", "b", "c"};
  t.target = {0, 1, 2};
  auto p = zscore_fit(t);
  CHECK(p.mean[0] == doctest::Approx(2.0));
  CHECK(p.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(p.mean[1] == 5.0);
  CHECK(p.std[1] == 0.0);
  CHECK(p.constant_mask[1]);
  CHECK(p.constant_mask[2]);
  CHECK(p.std[2] == 0.0);
  REQUIRE(p.target_mean.has_value());

  auto n = zscore_apply(t, p);
  CHECK(n.columns[0][0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(n.columns[0][1] == doctest::Approx(0.0));
  CHECK(n.columns[0][2] == doctest::Approx(1.2247448714).epsilon(1e-9));
  CHECK(n.columns[1] == Column{0, 0, 0});

  auto back = zscore_invert(n, p);
  CHECK(back.columns[1] == Column{5, 5, 5});
}

TEST_CASE("zscore leaves classification targets alone and rejects foreign params") {
  Table t;
  t.task = TaskKind::Classification;
  t.columns = {{1, 2, 3, 4}};
  t.names = {"a"};
  t.target = {0, 1, 1, 0};
  auto p = zscore_fit(t);
  CHECK_FALSE(p.target_mean.has_value());
  CHECK(zscore_apply(t, p).target == t.target);

  Table other = t;
  other.names = {"z"};
  CHECK_THROWS_AS(zscore_apply(other, p), DataError);
  CHECK_THROWS_AS(zscore_invert(other, p), DataError);
}

TEST_CASE("zscore identity params and round trip on random tables") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = saft::testing::random_table(50, 5, rng);
    auto p = zscore_fit(t);
    auto n = zscore_apply(t, p);
    auto back = zscore_invert(n, p);
    for (std::size_t j = 0; j < t.n_features(); ++j) {
      double mean = 0, ss = 0;
      for (double v : n.columns[j]) mean += v;
      mean /= 50.0;
      for (double v : n.columns[j]) ss += (v - mean) * (v - mean);
      CHECK(std::fabs(mean) < 1e-9);
      CHECK(std::fabs(std::sqrt(ss / 50.0) - 1.0) < 1e-9);
      for (std::size_t i = 0; i < 50; ++i)
        CHECK(std::fabs(back.columns[j][i] - t.columns[j][i]) < 1e-9);
    }
  }

  Table t;
  t.columns = {{1, -2, 3}};
  t.names = {"a"};
  t.target = {0, 1, 2};
  NormParams identity{{"a"}, {0.0}, {1.0}, {false}, 0.0, 1.0};
  CHECK(zscore_apply(t, identity).columns == t.columns);
  CHECK(zscore_invert(t, identity).columns == t.columns);
}

TEST_CASE("ks critical coefficient matches the tabulated 1.358 at alpha 0.05") {
  CHECK(ks_critical_coefficient(0.05) == doctest::Approx(1.358).epsilon(1e-3));
}

TEST_CASE("ks_two_sample basic cases") {
  std::vector<double> a{1, 2, 3, 4, 5};
  auto r = ks_two_sample(a, a, 0.95);
  CHECK(r.statistic == 0.0);
  CHECK_FALSE(r.reject);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(200), y(200);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng) + 0.5;
  auto shifted = ks_two_sample(x, y, 0.95);
  CHECK(shifted.reject);
  CHECK(shifted.statistic > 0.3);

  std::vector<double> one{1.0};
  CHECK_THROWS_AS(ks_two_sample(one, a, 0.95), DataError);
  CHECK_THROWS_AS(ks_two_sample({}, a, 0.95), DataError);
}

TEST_CASE("ks_two_sample matches a brute-force sup over pooled points") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> small(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(2 + trial % 9), b(2 + (trial * 7) % 11);
    for (auto& v : a) v = small(rng);  // many ties
    for (auto& v : b) v = small(rng) + 0.5 * (trial % 2);
    double brute = 0.0;
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (double x : pooled) {
      double fa = 0, fb = 0;
      for (double v : a) fa += v <= x;
      for (double v : b) fb += v <= x;
      brute = std::max(brute, std::fabs(fa / a.size() - fb / b.size()));
    }
    auto ab = ks_two_sample(a, b, 0.95);
    auto ba = ks_two_sample(b, a, 0.95);
    CHECK(ab.statistic == doctest::Approx(brute).epsilon(1e-15));
    CHECK(ab.statistic == ba.statistic);
    CHECK(ab.statistic >= 0.0);
    CHECK(ab.statistic <= 1.0);
  }
}

TEST_CASE("ks_two_sample false rejection rate on identical normals") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01(0.0, 1.0);
  int accepted = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(500), b(500);
    for (auto& v : a) v = n01(rng);
    for (auto& v : b) v = n01(rng);
    accepted += !ks_two_sample(a, b, 0.95).reject;
  }
  CHECK(accepted >= 90);
}

TEST_CASE("shift_split detects a sorted column and preserves row order") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01(0.0, 1.0);
  Table t;
  const std::size_t n = 100;
  for (int j = 0; j < 4; ++j) {
    Column c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = j == 2 ? static_cast<double>(i) : n01(rng);
    t.columns.push_back(c);
    t.names.push_back("c" + std::to_string(j));
  }
  t.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.target[i] = static_cast<double>(i) * 0.5;

  // Earlier columns may reject by chance; check the sorted column directly.
  Table sorted_only;
  sorted_only.columns = {t.columns[0], t.columns[1], t.columns[2]};
  sorted_only.names = {"a", "b", "c"};
  sorted_only.target = t.target;
  auto s = shift_split(t);
  REQUIRE(s.shifted_feature.has_value());
  CHECK(*s.shifted_feature <= 2);
  if (*s.shifted_feature == 2) CHECK(s.ks_statistic == 1.0);

  CHECK(s.train.n_rows() == 80);
  CHECK(s.test.n_rows() == 20);
  for (std::size_t j = 0; j < t.n_features(); ++j) {
    Column joined = s.train.columns[j];
    joined.insert(joined.end(), s.test.columns[j].begin(), s.test.columns[j].end());
    CHECK(joined == t.columns[j]);
  }
  Column target = s.train.target;
  target.insert(target.end(), s.test.target.begin(), s.test.target.end());
  CHECK(target == t.target);
}

TEST_CASE("shift_split on ten rows and argument checks") {
  Table t;
  t.columns = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
  t.names = {"a"};
  t.target = t.columns[0];
  auto s = shift_split(t, 0.8, 0.95);
  CHECK(s.train.n_rows() == 8);
  CHECK(s.test.n_rows() == 2);
  CHECK(s.train.columns[0] == Column{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_THROWS_AS(shift_split(t, 1.0), DataError);
  CHECK_THROWS_AS(shift_split(t, 0.0), DataError);
  CHECK_THROWS_AS(shift_split(t.slice_rows(0, 9)), DataError);
}

TEST_CASE("shift_split rarely flags i.i.d. noise") {
  std::mt19937_64 rng(99);
  int flagged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto t = saft::testing::random_table(200, 1, rng);
    flagged += shift_split(t).shifted_feature.has_value();
  }
  CHECK(flagged <= 8);
}
