#pragma once
// Sample reweighting that shrinks the random-Fourier-feature cross-covariance
// between embedding dimensions.

#include <cstdint>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "saft/nn/param_store.hpp"

namespace saft::repr {

// Two independent cosine maps f and g per embedding dimension:
// x -> sqrt(2/D) * cos(omega_k x + b_k), k = 1..D.
struct RffParams {
  std::size_t dims = 0;
  std::size_t features = 5;  // D
  nn::Matrix omega_f, phase_f;  // D x dims
  nn::Matrix omega_g, phase_g;

  static RffParams sample(std::size_t dims, std::size_t features, std::uint64_t seed);

  // N x (dims * D); columns [d*D, (d+1)*D) hold dimension d. E is dims x N.
  nn::Matrix map_f(const nn::Matrix& embeddings) const;
  nn::Matrix map_g(const nn::Matrix& embeddings) const;
};

nlohmann::json to_json(const RffParams& rff);
RffParams rff_from_json(const nlohmann::json& j);

struct CrossCovariance {
  double objective = 0.0;  // sum over dimension pairs i < j of ||C_ij||_F^2
  Eigen::VectorXd grad_r;  // d objective / d r
};

// Weighted cross-covariance objective. By default the weights multiply the
// feature maps before centering; `conventional` uses ordinary weighted
// covariance instead.
CrossCovariance rff_cross_cov(const Eigen::VectorXd& r, const nn::Matrix& embeddings,
                              const RffParams& rff, bool conventional = false);

// The D x D block for one pair of dimensions (i, j).
nn::Matrix rff_pair_block(const Eigen::VectorXd& r, const nn::Matrix& embeddings,
                          const RffParams& rff, std::size_t i, std::size_t j,
                          bool conventional = false);

// r = N * softmax(logits).
Eigen::VectorXd weights_from_logits(const Eigen::VectorXd& logits);

// Chain rule from d/dr to d/dlogits.
Eigen::VectorXd logits_gradient(const Eigen::VectorXd& r, const Eigen::VectorXd& grad_r);

struct WeightOptConfig {
  std::size_t epochs = 20;
  double lr = 0.01;
  bool conventional = false;
};

struct WeightOptResult {
  Eigen::VectorXd r;
  double initial_objective = 0.0;
  double final_objective = 0.0;
};

WeightOptResult optimize_weights(const nn::Matrix& embeddings, const RffParams& rff,
                                 const WeightOptConfig& cfg = {});

}  // namespace saft::repr
