#include "saft/feature_graph.hpp"

#include <algorithm>
#include <cmath>

#include "saft/errors.hpp"

namespace saft::repr {

namespace {

// Linear interpolation between order statistics.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double squash(double x) { return std::copysign(std::log1p(std::fabs(x)), x); }

}  // namespace

std::vector<double> node_statistics(std::span<const double> column, std::span<const double> target) {
  if (column.empty()) throw DataError("node_statistics: empty column");
  const double n = static_cast<double>(column.size());
  double mean = 0.0;
  for (double v : column) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : column) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);

  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());

  double corr = 0.0;
  if (target.size() == column.size() && sd > 0.0) {
    double tm = 0.0;
    for (double v : target) tm += v;
    tm /= n;
    double tss = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < column.size(); ++i) {
      tss += (target[i] - tm) * (target[i] - tm);
      cov += (column[i] - mean) * (target[i] - tm);
    }
    if (tss > 0.0) corr = std::min(1.0, std::fabs(cov / std::sqrt(ss * tss)));
  }
  std::vector<double> out{mean, sd, sorted.front(), sorted.back(), quantile_sorted(sorted, 0.5),
                          quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.75), corr};
  for (double& v : out)
    if (!std::isfinite(v)) v = 0.0;
  return out;
}

double abs_cosine(std::span<const double> a, std::span<const double> b) {
  // Scale by the max magnitude first so saturated values cannot overflow.
  double ma = 0.0, mb = 0.0;
  for (double v : a) ma = std::max(ma, std::fabs(v));
  for (double v : b) mb = std::max(mb, std::fabs(v));
  if (ma == 0.0 || mb == 0.0) return 0.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] / ma, y = b[i] / mb;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return std::min(1.0, std::fabs(dot) / std::sqrt(na * nb));
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty list");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()) - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

FeatureGraph build_graph(std::span<const Column> columns, std::span<const double> target,
                         double percentile) {
  if (columns.empty()) throw DataError("build_graph needs at least one feature");
  const std::size_t n = columns.size();
  FeatureGraph g;
  g.attributes.resize(static_cast<nn::Index>(kNodeAttributes), static_cast<nn::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto stats = node_statistics(columns[j], target);
    for (std::size_t k = 0; k < kNodeAttributes; ++k)
      g.attributes(static_cast<nn::Index>(k), static_cast<nn::Index>(j)) = squash(stats[k]);
  }
  g.neighbors.assign(n, {});
  if (n < 2) return g;

  std::vector<double> sims;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      sims.push_back(abs_cosine(columns[i], columns[j]));
      pairs.emplace_back(i, j);
    }
  const double threshold = nearest_rank_percentile(sims, percentile);
  for (std::size_t k = 0; k < sims.size(); ++k) {
    if (sims[k] < threshold || sims[k] <= 0.0) continue;
    g.edges.push_back(pairs[k]);
    g.similarity.push_back(sims[k]);
    g.neighbors[pairs[k].first].push_back(pairs[k].second);
    g.neighbors[pairs[k].second].push_back(pairs[k].first);
  }
  return g;
}

}  // namespace saft::repr
