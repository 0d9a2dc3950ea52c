#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "saft/nn/param_store.hpp"
#include "saft/nn/tape.hpp"

namespace saft::nn {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

Tape::Var activate(Tape& tape, Tape::Var x, Activation act);

// y = W x + b over a batch of column vectors.
struct Dense {
  std::string weight;
  std::string bias;
  Index in = 0;
  Index out = 0;

  static Dense create(ParamStore& store, const std::string& prefix, Index in, Index out,
                      std::mt19937_64& rng);
  Tape::Var forward(Tape& tape, ParamStore& store, Tape::Var x) const;
};

// Classical four-gate LSTM cell; gate rows are ordered input, forget, cell, output.
struct LstmCell {
  std::string weight;  // 4H x (input + H)
  std::string bias;    // 4H x 1
  Index input = 0;
  Index hidden = 0;

  static LstmCell create(ParamStore& store, const std::string& prefix, Index input,
                         Index hidden, std::mt19937_64& rng);
  // Returns (h', c').
  std::pair<Tape::Var, Tape::Var> forward(Tape& tape, ParamStore& store, Tape::Var x,
                                          Tape::Var h, Tape::Var c) const;
};

// Column i of H * A is the mean of H's columns listed in neighbors[i]; an
// empty neighbor list yields a zero column.
SparseMatrix mean_aggregation_matrix(const std::vector<std::vector<std::size_t>>& neighbors,
                                     std::size_t n_nodes);

Tape::Var mean_aggregate(Tape& tape, Tape::Var h, const SparseMatrix& aggregation);

}  // namespace saft::nn
