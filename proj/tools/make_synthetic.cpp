// Writes one of the seeded synthetic tables as CSV.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "saft/errors.hpp"
#include "saft/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a seeded synthetic dataset"};
  std::string kind = "shift", output;
  std::uint64_t seed = 0;
  std::optional<std::size_t> rows;
  app.add_option("--kind", kind, "shift or product")->check(CLI::IsMember({"shift", "product"}));
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--rows", rows, "Row count (default 800 for shift, 1500 for product)");
  app.add_option("--output,-o", output, "Output CSV")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto table = kind == "shift" ? saft::synthetic::shift_benchmark(seed, rows.value_or(800))
                                       : saft::synthetic::product_table(seed, rows.value_or(1500));
    saft::write_csv(output, table);
  } catch (const saft::Error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}
