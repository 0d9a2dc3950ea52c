#include "saft/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace saft::nn {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.worst_relative_error);
  return w;
}

GradCheckReport grad_check(ParamStore& store, const LossClosure& loss, double tolerance,
                           double step, double floor) {
  GradCheckReport report;
  report.tolerance = tolerance;
  store.zero_grad();
  loss(store, true);
  std::vector<Matrix> analytic;
  for (std::size_t i = 0; i < store.size(); ++i) analytic.push_back(store.entry(i).grad);

  for (std::size_t i = 0; i < store.size(); ++i) {
    GradCheckEntry entry;
    entry.tensor = store.entry(i).name;
    auto& value = store.entry(i).value;
    for (Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + step;
      const double up = loss(store, false);
      value.data()[k] = saved - step;
      const double down = loss(store, false);
      value.data()[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i].data()[k];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      entry.worst_relative_error = std::max(entry.worst_relative_error, std::fabs(a - numeric) / denom);
    }
    entry.passed = entry.worst_relative_error < tolerance;
    report.entries.push_back(entry);
  }
  store.zero_grad();
  return report;
}

}  // namespace saft::nn
