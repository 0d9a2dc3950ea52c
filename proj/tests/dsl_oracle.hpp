#pragma once
// Independent reference semantics for the cross DSL, used by the unit and
// acceptance tests. Nothing here calls into the library's evaluator.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "saft/cross_dsl.hpp"
#include "saft/errors.hpp"

namespace saft::testing {

inline double ref_saturate(double v) {
  if (v != v) return 0.0;
  if (v > 1e15) return 1e15;
  if (v < -1e15) return -1e15;
  return v;
}

inline double ref_denominator(double d) {
  if (d > -1e-12 && d < 1e-12) return d < 0.0 ? -1e-12 : 1e-12;
  return d;
}

inline double ref_eval(const dsl::ExprTree& t, const std::vector<Column>& cols, std::size_t row) {
  using K = dsl::ExprTree::Kind;
  if (t.kind == K::Feature) return cols.at(t.feature).at(row);
  if (t.kind == K::Unary) {
    const double x = ref_eval(t.children[0], cols, row);
    switch (t.unary_op) {
      case dsl::UnaryOp::SqrtAbs: return ref_saturate(std::sqrt(x < 0 ? -x : x));
      case dsl::UnaryOp::LogAbs: return ref_saturate(std::log((x < 0 ? -x : x) + 1e-12));
      case dsl::UnaryOp::Sin: return ref_saturate(std::sin(x));
      case dsl::UnaryOp::Cos: return ref_saturate(std::cos(x));
      case dsl::UnaryOp::Square: return ref_saturate(x * x);
      case dsl::UnaryOp::RecipSafe: return ref_saturate(1.0 / ref_denominator(x));
    }
  }
  const double a = ref_eval(t.children[0], cols, row);
  const double b = ref_eval(t.children[1], cols, row);
  switch (t.binary_op) {
    case dsl::BinaryOp::Add: return ref_saturate(a + b);
    case dsl::BinaryOp::Sub: return ref_saturate(a - b);
    case dsl::BinaryOp::Mul: return ref_saturate(a * b);
    case dsl::BinaryOp::Div: return ref_saturate(a / ref_denominator(b));
  }
  return 0.0;
}

inline dsl::ExprTree random_tree(std::mt19937_64& rng, int depth, std::uint32_t n_features) {
  std::uniform_int_distribution<std::uint32_t> feat(0, n_features - 1);
  std::uniform_int_distribution<int> kind(0, 2);
  if (depth == 0) return dsl::ExprTree::leaf(feat(rng));
  const int k = kind(rng);
  if (k == 0) return dsl::ExprTree::leaf(feat(rng));
  if (k == 1) {
    std::uniform_int_distribution<int> op(0, dsl::kNumUnaryOps - 1);
    auto u = static_cast<dsl::UnaryOp>(op(rng));
    return dsl::ExprTree::unary(u, random_tree(rng, depth - 1, n_features));
  }
  std::uniform_int_distribution<int> op(0, dsl::kNumBinaryOps - 1);
  auto b = static_cast<dsl::BinaryOp>(op(rng));
  auto left = random_tree(rng, depth - 1, n_features);
  return dsl::ExprTree::binary(b, std::move(left), random_tree(rng, depth - 1, n_features));
}

inline std::vector<Column> random_columns(std::mt19937_64& rng, std::size_t n_features,
                                          std::size_t rows) {
  std::normal_distribution<double> n01(0.0, 2.0);
  std::vector<Column> cols(n_features, Column(rows));
  for (auto& c : cols)
    for (auto& v : c) v = n01(rng);
  // A few exact zeros exercise the safe denominators.
  if (rows > 0) cols[0][0] = 0.0;
  return cols;
}

// Random token, biased toward features so that valid strings are common.
inline dsl::Token random_token(std::mt19937_64& rng, std::uint32_t n_features, bool delimiters) {
  std::uniform_int_distribution<int> pick(0, delimiters ? 99 : 89);
  const int p = pick(rng);
  if (p < 45) return dsl::Token::feature(std::uniform_int_distribution<std::uint32_t>(0, n_features)(rng));
  if (p < 65) return dsl::Token::binary(static_cast<dsl::BinaryOp>(std::uniform_int_distribution<int>(0, 3)(rng)));
  if (p < 85) return dsl::Token::unary(static_cast<dsl::UnaryOp>(std::uniform_int_distribution<int>(0, 5)(rng)));
  if (p < 88) return dsl::Token::pad();
  if (p < 90) return p == 88 ? dsl::Token::sos() : dsl::Token::eos();
  if (p < 97) return dsl::Token::sep();
  return p == 97 ? dsl::Token::sos() : dsl::Token::eos();
}

// Reference acceptance of a whole sequence: structure checked here, each
// segment delegated to eval_segment.
inline bool ref_sequence_ok(const dsl::CrossSequence& seq, const std::vector<Column>& cols) {
  using K = dsl::Token::Kind;
  const auto& t = seq.tokens;
  if (t.size() < 3 || t.size() > dsl::kMaxSequenceLength) return false;
  if (t.front().kind != K::Sos || t.back().kind != K::Eos) return false;
  std::vector<dsl::Token> seg;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i].kind == K::Sos) return false;
    if (t[i].kind == K::Eos && i + 1 != t.size()) return false;
    if (t[i].kind == K::Sep || t[i].kind == K::Eos) {
      if (seg.empty()) return false;
      try {
        dsl::eval_segment(seg, cols);
      } catch (const DslError&) {
        return false;
      }
      seg.clear();
    } else {
      seg.push_back(t[i]);
    }
  }
  return true;
}

}  // namespace saft::testing
