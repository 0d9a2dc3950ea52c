#pragma once

#include <functional>
#include <string>
#include <vector>

#include "saft/nn/param_store.hpp"

namespace saft::nn {

struct GradCheckEntry {
  std::string tensor;
  double worst_relative_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
};

// Evaluates `loss(store, with_grad)`; when with_grad is true the closure must
// also run backward so that gradients land in the store.
using LossClosure = std::function<double(ParamStore&, bool)>;

// Compares analytic gradients with central differences for every element of
// every tensor. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(ParamStore& store, const LossClosure& loss, double tolerance,
                           double step = 1e-5, double floor = 1e-8);

}  // namespace saft::nn
