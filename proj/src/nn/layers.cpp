#include "saft/nn/layers.hpp"

#include <cmath>

namespace saft::nn {

Tape::Var activate(Tape& tape, Tape::Var x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Relu: return tape.relu(x);
    case Activation::Tanh: return tape.tanh(x);
    case Activation::Sigmoid: return tape.sigmoid(x);
  }
  return x;
}

Dense Dense::create(ParamStore& store, const std::string& prefix, Index in, Index out,
                    std::mt19937_64& rng) {
  Dense d{prefix + ".W", prefix + ".b", in, out};
  store.add(d.weight, glorot_uniform(out, in, rng));
  store.add(d.bias, Matrix::Zero(out, 1));
  return d;
}

Tape::Var Dense::forward(Tape& tape, ParamStore& store, Tape::Var x) const {
  return tape.add_bias(tape.matmul(tape.param(store, weight), x), tape.param(store, bias));
}

LstmCell LstmCell::create(ParamStore& store, const std::string& prefix, Index input,
                          Index hidden, std::mt19937_64& rng) {
  LstmCell cell{prefix + ".W", prefix + ".b", input, hidden};
  store.add(cell.weight,
            uniform(4 * hidden, input + hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng));
  Matrix b = Matrix::Zero(4 * hidden, 1);
  b.middleRows(hidden, hidden).setOnes();  // forget gate starts open
  store.add(cell.bias, std::move(b));
  return cell;
}

std::pair<Tape::Var, Tape::Var> LstmCell::forward(Tape& tape, ParamStore& store, Tape::Var x,
                                                  Tape::Var h, Tape::Var c) const {
  auto hc = tape.lstm_step(x, h, c, tape.param(store, weight), tape.param(store, bias));
  return {tape.slice_rows(hc, 0, hidden), tape.slice_rows(hc, hidden, hidden)};
}

SparseMatrix mean_aggregation_matrix(const std::vector<std::vector<std::size_t>>& neighbors,
                                     std::size_t n_nodes) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const auto& nb = neighbors[i];
    for (auto j : nb)
      triplets.emplace_back(static_cast<int>(j), static_cast<int>(i),
                            1.0 / static_cast<double>(nb.size()));
  }
  SparseMatrix a(static_cast<Index>(n_nodes), static_cast<Index>(n_nodes));
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

Tape::Var mean_aggregate(Tape& tape, Tape::Var h, const SparseMatrix& aggregation) {
  return tape.matmul(h, aggregation);
}

}  // namespace saft::nn
