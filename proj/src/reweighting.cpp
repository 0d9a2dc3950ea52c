#include "saft/reweighting.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "saft/errors.hpp"

namespace saft::repr {

namespace {

nn::Matrix cosine_map(const nn::Matrix& e, const nn::Matrix& omega, const nn::Matrix& phase,
                      std::size_t features) {
  const auto dims = e.rows(), n = e.cols();
  const auto d = static_cast<nn::Index>(features);
  if (omega.cols() != dims)
    throw NumericError("RFF map built for " + std::to_string(omega.cols()) +
                       " dimensions applied to " + std::to_string(dims));
  const double scale = std::sqrt(2.0 / static_cast<double>(features));
  nn::Matrix out(n, dims * d);
  for (nn::Index dim = 0; dim < dims; ++dim)
    for (nn::Index k = 0; k < d; ++k)
      for (nn::Index s = 0; s < n; ++s)
        out(s, dim * d + k) = scale * std::cos(omega(k, dim) * e(dim, s) + phase(k, dim));
  return out;
}

nn::Matrix json_matrix(const nlohmann::json& j, std::size_t rows, std::size_t cols) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != rows * cols) throw DataError("RFF parameter has the wrong size");
  nn::Matrix m(static_cast<nn::Index>(rows), static_cast<nn::Index>(cols));
  for (std::size_t i = 0; i < values.size(); ++i) m.data()[i] = values[i];
  return m;
}

// Block mask keeping (i, j) blocks with i < j.
nn::Matrix upper_block_mask(std::size_t dims, std::size_t d) {
  const auto n = static_cast<nn::Index>(dims * d), dd = static_cast<nn::Index>(d);
  nn::Matrix k = nn::Matrix::Zero(n, n);
  for (nn::Index i = 0; i < static_cast<nn::Index>(dims); ++i)
    k.block(i * dd, (i + 1) * dd, dd, n - (i + 1) * dd).setOnes();
  return k;
}

// Rows minus their column means.
nn::Matrix centered(const nn::Matrix& m) { return m.rowwise() - m.colwise().mean(); }

}  // namespace

RffParams RffParams::sample(std::size_t dims, std::size_t features, std::uint64_t seed) {
  if (dims == 0 || features == 0) throw ConfigError("RFF dims and feature count must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  RffParams p;
  p.dims = dims;
  p.features = features;
  const auto r = static_cast<nn::Index>(features), c = static_cast<nn::Index>(dims);
  p.omega_f.resize(r, c);
  p.phase_f.resize(r, c);
  p.omega_g.resize(r, c);
  p.phase_g.resize(r, c);
  for (nn::Index i = 0; i < r * c; ++i) p.omega_f.data()[i] = n01(rng);
  for (nn::Index i = 0; i < r * c; ++i) p.phase_f.data()[i] = phase(rng);
  for (nn::Index i = 0; i < r * c; ++i) p.omega_g.data()[i] = n01(rng);
  for (nn::Index i = 0; i < r * c; ++i) p.phase_g.data()[i] = phase(rng);
  return p;
}

nn::Matrix RffParams::map_f(const nn::Matrix& e) const { return cosine_map(e, omega_f, phase_f, features); }
nn::Matrix RffParams::map_g(const nn::Matrix& e) const { return cosine_map(e, omega_g, phase_g, features); }

nlohmann::json to_json(const RffParams& rff) {
  auto flat = [](const nn::Matrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  return {{"dims", rff.dims},
          {"features", rff.features},
          {"omega_f", flat(rff.omega_f)},
          {"phase_f", flat(rff.phase_f)},
          {"omega_g", flat(rff.omega_g)},
          {"phase_g", flat(rff.phase_g)}};
}

RffParams rff_from_json(const nlohmann::json& j) {
  RffParams p;
  p.dims = j.at("dims").get<std::size_t>();
  p.features = j.at("features").get<std::size_t>();
  p.omega_f = json_matrix(j.at("omega_f"), p.features, p.dims);
  p.phase_f = json_matrix(j.at("phase_f"), p.features, p.dims);
  p.omega_g = json_matrix(j.at("omega_g"), p.features, p.dims);
  p.phase_g = json_matrix(j.at("phase_g"), p.features, p.dims);
  return p;
}

namespace {

// Cross-covariance objective on precomputed feature maps.
CrossCovariance cross_cov_mapped(const Eigen::VectorXd& r, const nn::Matrix& u, const nn::Matrix& v,
                                 const nn::Matrix& mask, bool conventional) {
  const auto n = u.rows();
  if (r.size() != n) throw NumericError("weight vector length differs from sample count");
  const double denom = static_cast<double>(n - 1);
  CrossCovariance out;
  if (!conventional) {
    const nn::Matrix ru = r.asDiagonal() * u, rv = r.asDiagonal() * v;
    const nn::Matrix a = centered(ru), b = centered(rv);
    const nn::Matrix c = (a.transpose() * b) / denom;
    const nn::Matrix kc = mask.cwiseProduct(c);
    out.objective = kc.squaredNorm();
    const nn::Matrix g = 2.0 * kc;
    // d/dr_n = [<(P R V G^T)_n, U_n> + <(V G^T)_n, (P R U)_n>] / (N - 1)
    const nn::Matrix vg = v * g.transpose();
    const nn::Matrix prvg = centered(r.asDiagonal() * vg);
    out.grad_r = (prvg.cwiseProduct(u).rowwise().sum() + vg.cwiseProduct(a).rowwise().sum()) / denom;
  } else {
    const Eigen::RowVectorXd mu_u = (r.transpose() * u) / static_cast<double>(n);
    const Eigen::RowVectorXd mu_v = (r.transpose() * v) / static_cast<double>(n);
    const nn::Matrix c =
        (u.transpose() * r.asDiagonal() * v - static_cast<double>(n) * mu_u.transpose() * mu_v) / denom;
    const nn::Matrix kc = mask.cwiseProduct(c);
    out.objective = kc.squaredNorm();
    const nn::Matrix g = 2.0 * kc;
    // d/dr_n = [u_n G v_n - u_n G mu_v - mu_u G v_n] / (N - 1)
    const nn::Matrix ug = u * g;
    const Eigen::VectorXd gmv = g * mu_v.transpose();
    const Eigen::RowVectorXd mug = mu_u * g;
    out.grad_r = (ug.cwiseProduct(v).rowwise().sum() - u * gmv - v * mug.transpose()) / denom;
  }
  return out;
}

}  // namespace

CrossCovariance rff_cross_cov(const Eigen::VectorXd& r, const nn::Matrix& embeddings,
                              const RffParams& rff, bool conventional) {
  if (embeddings.cols() < 2) throw DataError("cross-covariance needs at least 2 samples");
  return cross_cov_mapped(r, rff.map_f(embeddings), rff.map_g(embeddings),
                          upper_block_mask(rff.dims, rff.features), conventional);
}

nn::Matrix rff_pair_block(const Eigen::VectorXd& r, const nn::Matrix& embeddings,
                          const RffParams& rff, std::size_t i, std::size_t j, bool conventional) {
  const auto n = embeddings.cols();
  if (n < 2) throw DataError("cross-covariance needs at least 2 samples");
  const auto d = static_cast<nn::Index>(rff.features);
  const nn::Matrix u = rff.map_f(embeddings).middleCols(static_cast<nn::Index>(i) * d, d);
  const nn::Matrix v = rff.map_g(embeddings).middleCols(static_cast<nn::Index>(j) * d, d);
  const double denom = static_cast<double>(n - 1);
  if (!conventional) {
    const nn::Matrix a = centered(r.asDiagonal() * u), b = centered(r.asDiagonal() * v);
    return a.transpose() * b / denom;
  }
  const Eigen::RowVectorXd mu_u = (r.transpose() * u) / static_cast<double>(n);
  const Eigen::RowVectorXd mu_v = (r.transpose() * v) / static_cast<double>(n);
  return (u.transpose() * r.asDiagonal() * v - static_cast<double>(n) * mu_u.transpose() * mu_v) / denom;
}

Eigen::VectorXd weights_from_logits(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e * (static_cast<double>(logits.size()) / e.sum());
}

Eigen::VectorXd logits_gradient(const Eigen::VectorXd& r, const Eigen::VectorXd& grad_r) {
  const double n = static_cast<double>(r.size());
  const double mean_term = r.dot(grad_r) / n;
  return r.cwiseProduct(grad_r) - r * mean_term;
}

WeightOptResult optimize_weights(const nn::Matrix& embeddings, const RffParams& rff,
                                 const WeightOptConfig& cfg) {
  const auto n = embeddings.cols();
  if (n < 2) throw DataError("optimize_weights needs at least 2 samples");
  if (!embeddings.allFinite()) throw NumericError("optimize_weights: non-finite embedding");
  const nn::Matrix u = rff.map_f(embeddings), v = rff.map_g(embeddings);
  const nn::Matrix mask = upper_block_mask(rff.dims, rff.features);
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(n);
  WeightOptResult out;
  out.r = weights_from_logits(logits);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto cc = cross_cov_mapped(out.r, u, v, mask, cfg.conventional);
    if (e == 0) out.initial_objective = cc.objective;
    logits -= cfg.lr * logits_gradient(out.r, cc.grad_r);
    out.r = weights_from_logits(logits);
    if (!out.r.allFinite() || (out.r.array() <= 0.0).any())
      throw NumericError("sample weights left the positive simplex");
  }
  const auto last = cross_cov_mapped(out.r, u, v, mask, cfg.conventional);
  if (cfg.epochs == 0) out.initial_objective = last.objective;
  out.final_objective = last.objective;
  return out;
}

}  // namespace saft::repr
