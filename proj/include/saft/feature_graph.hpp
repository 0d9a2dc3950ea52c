#pragma once
// Feature-feature similarity graph of one transformed feature set.

#include <span>
#include <utility>
#include <vector>

#include "saft/nn/param_store.hpp"
#include "saft/table.hpp"

namespace saft::repr {

inline constexpr std::size_t kNodeAttributes = 8;

struct FeatureGraph {
  // kNodeAttributes x n_nodes; each entry squashed with sign(x) * log1p(|x|).
  nn::Matrix attributes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j
  std::vector<double> similarity;                           // per edge, in [0, 1]
  std::vector<std::vector<std::size_t>> neighbors;

  std::size_t n_nodes() const { return static_cast<std::size_t>(attributes.cols()); }
};

// mean, std, min, max, median, q25, q75, |corr with target| (unsquashed).
std::vector<double> node_statistics(std::span<const double> column, std::span<const double> target);

// |cosine| of raw columns; 0 when either column is all zeros.
double abs_cosine(std::span<const double> a, std::span<const double> b);

// Nearest-rank percentile (q in (0, 1]) of the values.
double nearest_rank_percentile(std::vector<double> values, double q);

FeatureGraph build_graph(std::span<const Column> columns, std::span<const double> target,
                         double percentile = 0.95);

}  // namespace saft::repr
