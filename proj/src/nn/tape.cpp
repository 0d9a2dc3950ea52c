#include "saft/nn/tape.hpp"

#include <cmath>

#include "saft/errors.hpp"

namespace saft::nn {

std::size_t Tape::idx(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw NumericError("tape variable does not belong to this tape");
  return static_cast<std::size_t>(v.id);
}

void Tape::check_finite(const Matrix& m, const char* op) const {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value entering ") + op);
}

Tape::Var Tape::push(Matrix value, bool needs_grad,
                     std::function<void(Tape&, const Node&)> fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  auto& n = nodes_[idx(v)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[idx(v)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Tape::Var Tape::constant(Matrix value) {
  check_finite(value, "constant");
  return push(std::move(value), false, nullptr);
}

Tape::Var Tape::input(Matrix value) {
  check_finite(value, "input");
  auto v = push(std::move(value), true, nullptr);
  nodes_.back().keeps_grad = true;
  return v;
}

Tape::Var Tape::param(ParamStore& store, const std::string& name) {
  const std::size_t i = store.index(name);
  for (std::size_t k = 0; k < param_nodes_.size(); ++k)
    if (param_nodes_[k].first == &store && param_nodes_[k].second == i)
      return Var{param_node_ids_[k]};
  const auto& value = store.entry(i).value;
  if (!value.allFinite()) throw NumericError("non-finite parameter '" + name + "'");
  auto v = push(value, true, nullptr);
  nodes_.back().store = &store;
  nodes_.back().param_index = i;
  param_nodes_.emplace_back(&store, i);
  param_node_ids_.push_back(v.id);
  return v;
}

void Tape::backward(Var loss) {
  const auto& l = nodes_[idx(loss)];
  if (l.value.rows() != 1 || l.value.cols() != 1)
    throw NumericError("backward() needs a scalar loss");
  if (!l.value.allFinite()) throw NumericError("non-finite loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  order_.clear();
  accumulate(loss, Matrix::Ones(1, 1));
  for (auto i = static_cast<std::int32_t>(idx(loss)); i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    order_.push_back(i);
    if (n.backward) n.backward(*this, n);
  }
  for (auto& n : nodes_)
    if (n.store && n.grad.size() != 0) n.store->entry(n.param_index).grad += n.grad;
}

Tape::Var Tape::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows())
    throw NumericError("matmul shape mismatch: " + std::to_string(A.rows()) + "x" +
                       std::to_string(A.cols()) + " * " + std::to_string(B.rows()) + "x" +
                       std::to_string(B.cols()));
  Matrix out = A * B;
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Node& self) {
    if (t.needs(a)) t.accumulate(a, self.grad * t.value(b).transpose());
    if (t.needs(b)) t.accumulate(b, t.value(a).transpose() * self.grad);
  });
}

Tape::Var Tape::matmul(Var a, const SparseMatrix& s) {
  const auto& A = value(a);
  if (A.cols() != s.rows()) throw NumericError("sparse matmul shape mismatch");
  Matrix out = A * s;
  SparseMatrix st = s.transpose();
  return push(std::move(out), needs(a), [a, st = std::move(st)](Tape& t, const Node& self) {
    t.accumulate(a, self.grad * st);
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw NumericError("add shape mismatch");
  return push(A + B, needs(a) || needs(b), [a, b](Tape& t, const Node& self) {
    t.accumulate(a, self.grad);
    t.accumulate(b, self.grad);
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw NumericError("sub shape mismatch");
  return push(A - B, needs(a) || needs(b), [a, b](Tape& t, const Node& self) {
    t.accumulate(a, self.grad);
    t.accumulate(b, -self.grad);
  });
}

Tape::Var Tape::add_bias(Var a, Var bias) {
  const auto& A = value(a);
  const auto& B = value(bias);
  if (B.cols() != 1 || B.rows() != A.rows())
    throw NumericError("bias shape mismatch: " + std::to_string(B.rows()) + "x" +
                       std::to_string(B.cols()) + " for " + std::to_string(A.rows()) + " rows");
  Matrix out = A.colwise() + B.col(0);
  return push(std::move(out), needs(a) || needs(bias), [a, bias](Tape& t, const Node& self) {
    t.accumulate(a, self.grad);
    if (t.needs(bias)) t.accumulate(bias, self.grad.rowwise().sum());
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw NumericError("mul shape mismatch");
  return push(A.cwiseProduct(B), needs(a) || needs(b), [a, b](Tape& t, const Node& self) {
    if (t.needs(a)) t.accumulate(a, self.grad.cwiseProduct(t.value(b)));
    if (t.needs(b)) t.accumulate(b, self.grad.cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::scale(Var a, double s) {
  return push(value(a) * s, needs(a),
              [a, s](Tape& t, const Node& self) { t.accumulate(a, self.grad * s); });
}

Tape::Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), needs(a), [a](Tape& t, const Node& self) {
    t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad));
  });
}

Tape::Var Tape::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  return push(std::move(out), needs(a), [a](Tape& t, const Node& self) {
    t.accumulate(a, ((1.0 - self.value.array().square()) * self.grad.array()).matrix());
  });
}

Tape::Var Tape::sigmoid(Var a) {
  Matrix out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  return push(std::move(out), needs(a), [a](Tape& t, const Node& self) {
    t.accumulate(a, (self.value.array() * (1.0 - self.value.array()) * self.grad.array()).matrix());
  });
}

Tape::Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat of zero tensors");
  Index rows = 0;
  const Index cols = value(parts[0]).cols();
  bool any = false;
  for (auto p : parts) {
    if (value(p).cols() != cols) throw NumericError("concat column mismatch");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return push(std::move(out), any, [saved = std::move(saved)](Tape& t, const Node& self) {
    Index r0 = 0;
    for (auto p : saved) {
      const Index h = t.value(p).rows();
      if (t.needs(p)) t.accumulate(p, self.grad.middleRows(r0, h));
      r0 += h;
    }
  });
}

Tape::Var Tape::slice_rows(Var a, Index start, Index count) {
  const auto& A = value(a);
  if (start < 0 || count < 0 || start + count > A.rows()) throw NumericError("slice out of range");
  Matrix out = A.middleRows(start, count);
  const Index rows = A.rows(), cols = A.cols();
  return push(std::move(out), needs(a), [a, start, count, rows, cols](Tape& t, const Node& self) {
    Matrix g = Matrix::Zero(rows, cols);
    g.middleRows(start, count) = self.grad;
    t.accumulate(a, g);
  });
}

Tape::Var Tape::lstm_step(Var x, Var h, Var c, Var weight, Var bias) {
  const auto& X = value(x);
  const auto& Hp = value(h);
  const auto& Cp = value(c);
  const auto& W = value(weight);
  const auto& b = value(bias);
  const Index H = Hp.rows(), B = X.cols();
  if (Cp.rows() != H || Hp.cols() != B || Cp.cols() != B || W.rows() != 4 * H ||
      W.cols() != X.rows() + H || b.rows() != 4 * H || b.cols() != 1)
    throw NumericError("lstm_step shape mismatch");
  Matrix xh(X.rows() + H, B);
  xh.topRows(X.rows()) = X;
  xh.bottomRows(H) = Hp;
  Matrix gates = W * xh;
  gates.colwise() += b.col(0);
  auto sig = [](const auto& m) { return (1.0 / (1.0 + (-m.array()).exp())).matrix(); };
  gates.middleRows(0, 2 * H) = sig(gates.middleRows(0, 2 * H));
  gates.middleRows(2 * H, H) = gates.middleRows(2 * H, H).array().tanh().matrix();
  gates.middleRows(3 * H, H) = sig(gates.middleRows(3 * H, H));
  Matrix c_next = gates.middleRows(H, H).cwiseProduct(Cp) +
                  gates.middleRows(0, H).cwiseProduct(gates.middleRows(2 * H, H));
  Matrix tc = c_next.array().tanh().matrix();
  Matrix out(2 * H, B);
  out.topRows(H) = gates.middleRows(3 * H, H).cwiseProduct(tc);
  out.bottomRows(H) = c_next;
  const bool any = needs(x) || needs(h) || needs(c) || needs(weight) || needs(bias);
  return push(std::move(out), any,
              [x, h, c, weight, bias, gates = std::move(gates), xh = std::move(xh),
               tc = std::move(tc), H](Tape& t, const Node& self) {
                const auto i = gates.middleRows(0, H).array();
                const auto f = gates.middleRows(H, H).array();
                const auto g = gates.middleRows(2 * H, H).array();
                const auto o = gates.middleRows(3 * H, H).array();
                const auto dh = self.grad.topRows(H).array();
                Eigen::ArrayXXd dc = self.grad.bottomRows(H).array() + dh * o * (1.0 - tc.array().square());
                Matrix dgates(4 * H, gates.cols());
                dgates.middleRows(0, H) = (dc * g * i * (1.0 - i)).matrix();
                dgates.middleRows(H, H) = (dc * t.value(c).array() * f * (1.0 - f)).matrix();
                dgates.middleRows(2 * H, H) = (dc * i * (1.0 - g.square())).matrix();
                dgates.middleRows(3 * H, H) = (dh * tc.array() * o * (1.0 - o)).matrix();
                if (t.needs(c)) t.accumulate(c, (dc * f).matrix());
                if (t.needs(weight)) t.accumulate(weight, dgates * xh.transpose());
                if (t.needs(bias)) t.accumulate(bias, dgates.rowwise().sum());
                if (t.needs(x) || t.needs(h)) {
                  Matrix dxh = t.value(weight).transpose() * dgates;
                  const Index in = dxh.rows() - H;
                  if (t.needs(x)) t.accumulate(x, dxh.topRows(in));
                  if (t.needs(h)) t.accumulate(h, dxh.bottomRows(H));
                }
              });
}

Tape::Var Tape::l2_normalize_cols(Var a, double eps) {
  const auto& A = value(a);
  Eigen::RowVectorXd norms = (A.colwise().squaredNorm().array() + eps).sqrt().matrix();
  Matrix out = A.array().rowwise() / norms.array();
  return push(std::move(out), needs(a), [a, norms](Tape& t, const Node& self) {
    // d(x/n) = (g - y (y.g)) / n with y = x/n.
    const Matrix& y = self.value;
    Eigen::RowVectorXd dots = (y.cwiseProduct(self.grad)).colwise().sum();
    Matrix g = self.grad - y * dots.asDiagonal();
    g = g.array().rowwise() / norms.array();
    t.accumulate(a, g);
  });
}

Tape::Var Tape::gather_cols(Var table, std::span<const int> ids) {
  const auto& T = value(table);
  Matrix out(T.rows(), static_cast<Index>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= T.cols()) throw NumericError("gather index out of range");
    out.col(static_cast<Index>(k)) = T.col(ids[k]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  const Index rows = T.rows(), cols = T.cols();
  return push(std::move(out), needs(table),
              [table, saved = std::move(saved), rows, cols](Tape& t, const Node& self) {
                Matrix g = Matrix::Zero(rows, cols);
                for (std::size_t k = 0; k < saved.size(); ++k)
                  g.col(saved[k]) += self.grad.col(static_cast<Index>(k));
                t.accumulate(table, g);
              });
}

Tape::Var Tape::mean_cols(Var a) {
  const auto& A = value(a);
  const Index cols = A.cols();
  if (cols == 0) throw NumericError("mean of zero columns");
  Matrix out = A.rowwise().mean();
  return push(std::move(out), needs(a), [a, cols](Tape& t, const Node& self) {
    t.accumulate(a, self.grad.replicate(1, cols) / static_cast<double>(cols));
  });
}

Tape::Var Tape::sum(Var a) {
  const auto& A = value(a);
  Matrix out(1, 1);
  out(0, 0) = A.sum();
  const Index rows = A.rows(), cols = A.cols();
  return push(std::move(out), needs(a), [a, rows, cols](Tape& t, const Node& self) {
    t.accumulate(a, Matrix::Constant(rows, cols, self.grad(0, 0)));
  });
}

Tape::Var Tape::softmax_xent(Var logits, std::span<const int> targets,
                             std::span<const double> mask) {
  const auto& L = value(logits);
  if (static_cast<Index>(targets.size()) != L.cols() || mask.size() != targets.size())
    throw NumericError("softmax_xent: logits have " + std::to_string(L.cols()) +
                       " columns but " + std::to_string(targets.size()) + " targets");
  Matrix probs(L.rows(), L.cols());
  double loss = 0.0;
  for (Index b = 0; b < L.cols(); ++b) {
    const double mx = L.col(b).maxCoeff();
    Eigen::VectorXd e = (L.col(b).array() - mx).exp();
    const double z = e.sum();
    probs.col(b) = e / z;
    const int tgt = targets[static_cast<std::size_t>(b)];
    if (mask[static_cast<std::size_t>(b)] != 0.0) {
      if (tgt < 0 || tgt >= L.rows()) throw NumericError("softmax_xent target out of range");
      loss += mask[static_cast<std::size_t>(b)] * (std::log(z) + mx - L(tgt, b));
    }
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> t_saved(targets.begin(), targets.end());
  std::vector<double> m_saved(mask.begin(), mask.end());
  return push(std::move(out), needs(logits),
              [logits, probs = std::move(probs), t_saved = std::move(t_saved),
               m_saved = std::move(m_saved)](Tape& t, const Node& self) {
                Matrix g = probs;
                for (Index b = 0; b < g.cols(); ++b) {
                  const double w = m_saved[static_cast<std::size_t>(b)];
                  if (w == 0.0) {
                    g.col(b).setZero();
                    continue;
                  }
                  g(t_saved[static_cast<std::size_t>(b)], b) -= 1.0;
                  g.col(b) *= w;
                }
                t.accumulate(logits, g * self.grad(0, 0));
              });
}

Tape::Var Tape::weighted_sq_error(Var pred, std::span<const double> target,
                                  std::span<const double> weights) {
  const auto& P = value(pred);
  if (P.rows() != 1 || static_cast<std::size_t>(P.cols()) != target.size() ||
      weights.size() != target.size())
    throw NumericError("weighted_sq_error: prediction is " + std::to_string(P.rows()) + "x" +
                       std::to_string(P.cols()) + ", targets " + std::to_string(target.size()));
  Matrix diff(1, P.cols());
  double loss = 0.0;
  for (Index b = 0; b < P.cols(); ++b) {
    diff(0, b) = P(0, b) - target[static_cast<std::size_t>(b)];
    loss += weights[static_cast<std::size_t>(b)] * diff(0, b) * diff(0, b);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<double> w(weights.begin(), weights.end());
  return push(std::move(out), needs(pred),
              [pred, diff = std::move(diff), w = std::move(w)](Tape& t, const Node& self) {
                Matrix g(1, diff.cols());
                for (Index b = 0; b < diff.cols(); ++b)
                  g(0, b) = 2.0 * w[static_cast<std::size_t>(b)] * diff(0, b) * self.grad(0, 0);
                t.accumulate(pred, g);
              });
}

Tape::Var Tape::mse(Var pred, const Matrix& truth) {
  const auto& P = value(pred);
  if (P.rows() != truth.rows() || P.cols() != truth.cols())
    throw NumericError("mse shape mismatch between prediction and truth");
  check_finite(truth, "mse");
  Matrix diff = P - truth;
  Matrix out(1, 1);
  const auto n = static_cast<double>(diff.size());
  out(0, 0) = diff.squaredNorm() / n;
  return push(std::move(out), needs(pred), [pred, diff = std::move(diff), n](Tape& t, const Node& self) {
    t.accumulate(pred, diff * (2.0 * self.grad(0, 0) / n));
  });
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp();
  return e / e.sum();
}

}  // namespace saft::nn
