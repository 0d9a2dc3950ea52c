#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every op appends a node holding its value and a closure that pushes the
// node's adjoint to its parents. backward() walks the nodes once, newest
// first. Column-oriented: a batch of vectors is a matrix with one column per
// item.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "saft/nn/param_store.hpp"

namespace saft::nn {

using SparseMatrix = Eigen::SparseMatrix<double>;

class Tape {
 public:
  struct Var {
    std::int32_t id = -1;
  };

  Var constant(Matrix value);
  // Leaf whose adjoint is kept for grad(); used for input gradients.
  Var input(Matrix value);
  // Leaf bound to a stored parameter; backward() adds its adjoint into the
  // store's gradient buffer. Repeated calls return the same node.
  Var param(ParamStore& store, const std::string& name);

  const Matrix& value(Var v) const { return nodes_[idx(v)].value; }
  // Adjoint after backward(); zeros when nothing flowed into the node.
  Matrix grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  // Node ids in the order the last backward() visited them.
  const std::vector<std::int32_t>& backward_order() const { return order_; }

  // `loss` must be 1x1.
  void backward(Var loss);

  Var matmul(Var a, Var b);
  Var matmul(Var a, const SparseMatrix& s);  // a * s, s constant
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_bias(Var a, Var bias);  // bias is rows x 1, broadcast over columns
  Var mul(Var a, Var b);          // elementwise
  Var scale(Var a, double s);
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, Index start, Index count);
  Var l2_normalize_cols(Var a, double eps = 1e-12);
  Var gather_cols(Var table, std::span<const int> ids);
  // Fused LSTM cell (gate rows: input, forget, cell, output). Returns the
  // stacked [h'; c'] (2H x B).
  Var lstm_step(Var x, Var h, Var c, Var weight, Var bias);
  Var mean_cols(Var a);
  Var sum(Var a);
  // Sum over columns b of mask[b] * -log softmax(logits[:, b])[targets[b]].
  Var softmax_xent(Var logits, std::span<const int> targets, std::span<const double> mask);
  // Sum over columns b of weights[b] * (pred(0, b) - target[b])^2.
  Var weighted_sq_error(Var pred, std::span<const double> target,
                        std::span<const double> weights);
  // Mean of elementwise squared differences.
  Var mse(Var pred, const Matrix& truth);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool keeps_grad = false;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
    std::function<void(Tape&, const Node&)> backward;
  };

  std::size_t idx(Var v) const;
  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, const Node&)> fn);
  bool needs(Var v) const { return nodes_[idx(v)].needs_grad; }
  void accumulate(Var v, const Matrix& g);
  void check_finite(const Matrix& m, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<const ParamStore*, std::size_t>> param_nodes_;  // (store, entry) -> node via parallel vector
  std::vector<std::int32_t> param_node_ids_;
  std::vector<std::int32_t> order_;
};

// Numerically stable softmax of a vector.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace saft::nn
