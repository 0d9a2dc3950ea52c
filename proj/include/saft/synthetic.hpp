#pragma once
// Seeded synthetic tables used by the demo tools and tests.

#include <cstdint>

#include "saft/table.hpp"

namespace saft::synthetic {

// 5 features, y = f1 * f2 + sin(f3) + small noise, with f3 drifting upward
// with the row index.
Table shift_benchmark(std::uint64_t seed, std::size_t rows = 800);

// f0, f1 ~ U(-3, 3) plus one noise column, y = f0 * f1 + N(0, 0.05).
Table product_table(std::uint64_t seed, std::size_t rows = 1500);

}  // namespace saft::synthetic
