#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace saft::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Named parameter tensors with gradient buffers and Adam moments.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;  // first moment
    Matrix v;  // second moment
  };

  Matrix& add(const std::string& name, Matrix init);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index(const std::string& name) const;

  Matrix& value(const std::string& name) { return entries_[index(name)].value; }
  const Matrix& value(const std::string& name) const { return entries_[index(name)].value; }
  Matrix& grad(const std::string& name) { return entries_[index(name)].grad; }

  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  void zero_grad();
  // Copies values (not optimizer state) from a store with the same layout.
  void copy_values_from(const ParamStore& other);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Bias-corrected Adam update. Throws NumericError naming the tensor when a
// gradient is non-finite; nothing is updated in that case.
void adam_step(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Checkpoint layout: manifest.json plus one little-endian float64 blob per
// tensor (and per Adam moment).
void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir);
ParamStore load_checkpoint(const std::filesystem::path& dir);

// Uniform in +/- sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Index rows, Index cols, std::mt19937_64& rng);
Matrix uniform(Index rows, Index cols, double bound, std::mt19937_64& rng);

}  // namespace saft::nn
