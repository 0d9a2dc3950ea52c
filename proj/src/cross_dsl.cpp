#include "saft/cross_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "saft/errors.hpp"

namespace saft::dsl {

namespace {

constexpr const char* kBinaryNames[kNumBinaryOps] = {"+", "-", "*", "/"};
constexpr const char* kUnaryNames[kNumUnaryOps] = {"sqrt", "log", "sin", "cos", "square", "recip"};

double saturate(double v) {
  if (std::isnan(v)) return 0.0;
  return std::clamp(v, -kValueCap, kValueCap);
}

double clamp_denominator(double d) {
  if (std::fabs(d) < kDenominatorFloor) return d < 0.0 ? -kDenominatorFloor : kDenominatorFloor;
  return d;
}

}  // namespace

std::vector<Segment> CrossSequence::segments() const {
  std::vector<Segment> out;
  Segment current;
  bool open = false;
  for (const auto& t : tokens) {
    if (t.is_delimiter()) {
      if (open) out.push_back(std::move(current));
      current.clear();
      open = t.kind != Token::Kind::Eos;
    } else {
      current.push_back(t);
    }
  }
  return out;
}

CrossSequence CrossSequence::from_segments(std::span<const Segment> segments) {
  CrossSequence seq;
  seq.tokens.push_back(Token::sos());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) seq.tokens.push_back(Token::sep());
    seq.tokens.insert(seq.tokens.end(), segments[i].begin(), segments[i].end());
  }
  seq.tokens.push_back(Token::eos());
  return seq;
}

Token op_token(std::size_t op_index) {
  if (op_index < kNumBinaryOps) return Token::binary(static_cast<BinaryOp>(op_index));
  return Token::unary(static_cast<UnaryOp>(op_index - kNumBinaryOps));
}

bool op_is_unary(std::size_t op_index) { return op_index >= kNumBinaryOps; }

std::string to_string(Violation v) {
  switch (v) {
    case Violation::None: return "none";
    case Violation::Empty: return "empty sequence";
    case Violation::MissingSos: return "missing <sos>";
    case Violation::MissingEos: return "missing <eos>";
    case Violation::StackUnderflow: return "stack underflow";
    case Violation::SegmentDepth: return "segment does not reduce to one value";
    case Violation::EmptySegment: return "empty segment";
    case Violation::FeatureOutOfRange: return "feature index out of range";
    case Violation::MisplacedDelimiter: return "misplaced delimiter";
    case Violation::Padding: return "padding inside sequence";
    case Violation::TooLong: return "sequence exceeds length cap";
  }
  return "unknown";
}

std::string ValidityReport::message() const {
  if (valid) return "valid";
  return to_string(violation) + " at position " + std::to_string(position);
}

namespace {

ValidityReport fail(Violation v, std::size_t pos) { return {false, v, pos}; }

}  // namespace

ValidityReport validate(const CrossSequence& seq, std::size_t n_features) {
  const auto& toks = seq.tokens;
  if (toks.empty()) return fail(Violation::Empty, 0);
  if (toks.size() > kMaxSequenceLength) return fail(Violation::TooLong, kMaxSequenceLength);
  if (toks[0].kind != Token::Kind::Sos) return fail(Violation::MissingSos, 0);

  std::size_t depth = 0;
  std::size_t seg_len = 0;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    const auto& t = toks[i];
    switch (t.kind) {
      case Token::Kind::Pad: return fail(Violation::Padding, i);
      case Token::Kind::Sos: return fail(Violation::MisplacedDelimiter, i);
      case Token::Kind::Feature:
        if (t.value >= n_features) return fail(Violation::FeatureOutOfRange, i);
        ++depth;
        ++seg_len;
        break;
      case Token::Kind::Unary:
        if (t.value >= kNumUnaryOps) return fail(Violation::MisplacedDelimiter, i);
        if (depth < 1) return fail(Violation::StackUnderflow, i);
        ++seg_len;
        break;
      case Token::Kind::Binary:
        if (t.value >= kNumBinaryOps) return fail(Violation::MisplacedDelimiter, i);
        if (depth < 2) return fail(Violation::StackUnderflow, i);
        --depth;
        ++seg_len;
        break;
      case Token::Kind::Sep:
      case Token::Kind::Eos:
        if (seg_len == 0) return fail(Violation::EmptySegment, i);
        if (depth != 1) return fail(Violation::SegmentDepth, i);
        if (t.kind == Token::Kind::Eos) {
          if (i + 1 != toks.size()) return fail(Violation::MisplacedDelimiter, i + 1);
          return {};
        }
        depth = 0;
        seg_len = 0;
        break;
    }
  }
  return fail(Violation::MissingEos, toks.size());
}

ValidityReport validate_segment(std::span<const Token> segment, std::size_t n_features) {
  if (segment.empty()) return fail(Violation::EmptySegment, 0);
  if (segment.size() > kMaxSequenceLength) return fail(Violation::TooLong, kMaxSequenceLength);
  std::size_t depth = 0;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto& t = segment[i];
    switch (t.kind) {
      case Token::Kind::Pad: return fail(Violation::Padding, i);
      case Token::Kind::Sos:
      case Token::Kind::Sep:
      case Token::Kind::Eos: return fail(Violation::MisplacedDelimiter, i);
      case Token::Kind::Feature:
        if (t.value >= n_features) return fail(Violation::FeatureOutOfRange, i);
        ++depth;
        break;
      case Token::Kind::Unary:
        if (t.value >= kNumUnaryOps) return fail(Violation::MisplacedDelimiter, i);
        if (depth < 1) return fail(Violation::StackUnderflow, i);
        break;
      case Token::Kind::Binary:
        if (t.value >= kNumBinaryOps) return fail(Violation::MisplacedDelimiter, i);
        if (depth < 2) return fail(Violation::StackUnderflow, i);
        --depth;
        break;
    }
  }
  if (depth != 1) return fail(Violation::SegmentDepth, segment.size());
  return {};
}

ExprTree ExprTree::leaf(std::uint32_t index) {
  ExprTree t;
  t.kind = Kind::Feature;
  t.feature = index;
  return t;
}

ExprTree ExprTree::unary(UnaryOp op, ExprTree child) {
  ExprTree t;
  t.kind = Kind::Unary;
  t.unary_op = op;
  t.children.push_back(std::move(child));
  return t;
}

ExprTree ExprTree::binary(BinaryOp op, ExprTree left, ExprTree right) {
  ExprTree t;
  t.kind = Kind::Binary;
  t.binary_op = op;
  t.children.push_back(std::move(left));
  t.children.push_back(std::move(right));
  return t;
}

namespace {

void emit_postfix(const ExprTree& tree, Segment& out) {
  switch (tree.kind) {
    case ExprTree::Kind::Feature: out.push_back(Token::feature(tree.feature)); break;
    case ExprTree::Kind::Unary:
      emit_postfix(tree.children.at(0), out);
      out.push_back(Token::unary(tree.unary_op));
      break;
    case ExprTree::Kind::Binary:
      emit_postfix(tree.children.at(0), out);
      emit_postfix(tree.children.at(1), out);
      out.push_back(Token::binary(tree.binary_op));
      break;
  }
}

}  // namespace

Segment infix_to_postfix(const ExprTree& tree) {
  Segment out;
  emit_postfix(tree, out);
  return out;
}

ExprTree postfix_to_tree(std::span<const Token> segment) {
  std::vector<ExprTree> stack;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto& t = segment[i];
    switch (t.kind) {
      case Token::Kind::Feature: stack.push_back(ExprTree::leaf(t.value)); break;
      case Token::Kind::Unary: {
        if (stack.empty()) throw DslError("stack underflow", i);
        auto child = std::move(stack.back());
        stack.back() = ExprTree::unary(t.unary_op(), std::move(child));
        break;
      }
      case Token::Kind::Binary: {
        if (stack.size() < 2) throw DslError("stack underflow", i);
        auto right = std::move(stack.back());
        stack.pop_back();
        auto left = std::move(stack.back());
        stack.back() = ExprTree::binary(t.binary_op(), std::move(left), std::move(right));
        break;
      }
      default: throw DslError("delimiter inside segment", i);
    }
  }
  if (stack.size() != 1) throw DslError("segment does not reduce to one value", segment.size());
  return std::move(stack.back());
}

std::string render_infix(const ExprTree& tree, std::span<const std::string> names) {
  switch (tree.kind) {
    case ExprTree::Kind::Feature:
      if (tree.feature < names.size()) return names[tree.feature];
      return "f" + std::to_string(tree.feature);
    case ExprTree::Kind::Unary:
      return std::string(kUnaryNames[static_cast<int>(tree.unary_op)]) + "(" +
             render_infix(tree.children[0], names) + ")";
    case ExprTree::Kind::Binary:
      return "(" + render_infix(tree.children[0], names) + " " +
             kBinaryNames[static_cast<int>(tree.binary_op)] + " " +
             render_infix(tree.children[1], names) + ")";
  }
  return {};
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return saturate(a + b);
    case BinaryOp::Sub: return saturate(a - b);
    case BinaryOp::Mul: return saturate(a * b);
    case BinaryOp::Div: return saturate(a / clamp_denominator(b));
  }
  return 0.0;
}

double apply_unary(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::SqrtAbs: return saturate(std::sqrt(std::fabs(x)));
    case UnaryOp::LogAbs: return saturate(std::log(std::fabs(x) + kDenominatorFloor));
    case UnaryOp::Sin: return saturate(std::sin(x));
    case UnaryOp::Cos: return saturate(std::cos(x));
    case UnaryOp::Square: return saturate(x * x);
    case UnaryOp::RecipSafe: return saturate(1.0 / clamp_denominator(x));
  }
  return 0.0;
}

std::vector<double> eval_segment(std::span<const Token> segment,
                                 std::span<const Column> columns) {
  if (segment.empty()) throw DslError("empty segment", 0);
  if (segment.size() > kMaxSequenceLength)
    throw DslError("segment exceeds length cap", kMaxSequenceLength);
  const std::size_t n = columns.empty() ? 0 : columns[0].size();
  std::vector<Column> stack;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const auto& t = segment[i];
    switch (t.kind) {
      case Token::Kind::Feature:
        if (t.value >= columns.size()) throw DslError("feature index out of range", i);
        stack.push_back(columns[t.value]);
        break;
      case Token::Kind::Unary: {
        if (stack.empty()) throw DslError("stack underflow", i);
        if (t.value >= kNumUnaryOps) throw DslError("unknown operator", i);
        for (double& v : stack.back()) v = apply_unary(t.unary_op(), v);
        break;
      }
      case Token::Kind::Binary: {
        if (stack.size() < 2) throw DslError("stack underflow", i);
        if (t.value >= kNumBinaryOps) throw DslError("unknown operator", i);
        Column right = std::move(stack.back());
        stack.pop_back();
        auto& left = stack.back();
        for (std::size_t r = 0; r < n; ++r) left[r] = apply_binary(t.binary_op(), left[r], right[r]);
        break;
      }
      default: throw DslError("delimiter or padding inside segment", i);
    }
  }
  if (stack.size() != 1) throw DslError("segment does not reduce to one value", segment.size());
  return std::move(stack.back());
}

std::vector<double> eval_segment(std::span<const Token> segment, const Table& table) {
  return eval_segment(segment, std::span<const Column>(table.columns));
}

TransformedFeatureSet apply_sequence(const CrossSequence& seq,
                                     std::span<const Column> columns,
                                     std::span<const std::string> names) {
  const auto report = validate(seq, columns.size());
  if (!report.valid) throw DslError("invalid sequence: " + report.message(), report.position);

  TransformedFeatureSet out;
  out.source = seq;
  std::vector<std::size_t> multiplicity;
  for (auto& segment : seq.segments()) {
    auto it = std::find(out.segments.begin(), out.segments.end(), segment);
    if (it != out.segments.end()) {
      ++multiplicity[static_cast<std::size_t>(it - out.segments.begin())];
      continue;
    }
    out.columns.push_back(eval_segment(segment, columns));
    out.provenance.push_back(render_infix(postfix_to_tree(segment), names));
    out.segments.push_back(std::move(segment));
    multiplicity.push_back(1);
  }
  for (std::size_t i = 0; i < multiplicity.size(); ++i)
    if (multiplicity[i] > 1)
      out.provenance[i] += " [merged " + std::to_string(multiplicity[i]) + " duplicates]";
  return out;
}

TransformedFeatureSet apply_sequence(const CrossSequence& seq, const Table& table) {
  return apply_sequence(seq, std::span<const Column>(table.columns),
                        std::span<const std::string>(table.names));
}

std::string token_name(const Token& token) {
  switch (token.kind) {
    case Token::Kind::Feature: return "f" + std::to_string(token.value);
    case Token::Kind::Binary:
      return token.value < kNumBinaryOps ? kBinaryNames[token.value] : "<bad-op>";
    case Token::Kind::Unary:
      return token.value < kNumUnaryOps ? kUnaryNames[token.value] : "<bad-op>";
    case Token::Kind::Sos: return "<sos>";
    case Token::Kind::Sep: return "<sep>";
    case Token::Kind::Eos: return "<eos>";
    case Token::Kind::Pad: return "<pad>";
  }
  return "<bad>";
}

std::string render_segment(std::span<const Token> segment) {
  std::string out;
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (i > 0) out += ' ';
    out += token_name(segment[i]);
  }
  return out;
}

std::string render(const CrossSequence& seq) { return render_segment(seq.tokens); }

CrossSequence parse(std::string_view text, std::optional<std::size_t> max_features) {
  CrossSequence seq;
  std::size_t pos = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const auto word = text.substr(i, j - i);
    i = j;

    Token token;
    bool known = true;
    if (word == "<sos>") token = Token::sos();
    else if (word == "<sep>") token = Token::sep();
    else if (word == "<eos>") token = Token::eos();
    else if (word == "<pad>") token = Token::pad();
    else if (word.size() > 1 && word[0] == 'f' &&
             std::all_of(word.begin() + 1, word.end(),
                         [](char c) { return c >= '0' && c <= '9'; })) {
      std::uint32_t index = 0;
      auto [ptr, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), index);
      if (ec != std::errc() || ptr != word.data() + word.size())
        throw DslError("feature index overflow in '" + std::string(word) + "' at position " +
                           std::to_string(pos), pos);
      if (max_features && index >= *max_features)
        throw DslError("feature index overflow: '" + std::string(word) + "' at position " +
                           std::to_string(pos) + " (table has " +
                           std::to_string(*max_features) + " features)", pos);
      token = Token::feature(index);
    } else {
      known = false;
      for (std::size_t k = 0; k < kNumBinaryOps; ++k)
        if (word == kBinaryNames[k]) { token = Token::binary(static_cast<BinaryOp>(k)); known = true; }
      for (std::size_t k = 0; k < kNumUnaryOps; ++k)
        if (word == kUnaryNames[k]) { token = Token::unary(static_cast<UnaryOp>(k)); known = true; }
    }
    if (!known)
      throw DslError("unknown token '" + std::string(word) + "' at position " +
                         std::to_string(pos), pos);
    seq.tokens.push_back(token);
    ++pos;
  }
  return seq;
}

int Vocabulary::id(const Token& token) const {
  switch (token.kind) {
    case Token::Kind::Pad: return kPad;
    case Token::Kind::Sos: return kSos;
    case Token::Kind::Sep: return kSep;
    case Token::Kind::Eos: return kEos;
    case Token::Kind::Binary: return kFirstOp + static_cast<int>(token.value);
    case Token::Kind::Unary:
      return kFirstOp + static_cast<int>(kNumBinaryOps) + static_cast<int>(token.value);
    case Token::Kind::Feature:
      if (token.value >= n_features_)
        throw DslError("token " + token_name(token) + " outside vocabulary", 0);
      return kFirstFeature + static_cast<int>(token.value);
  }
  return kPad;
}

Token Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size())
    throw DslError("token id " + std::to_string(id) + " outside vocabulary", 0);
  if (id == kPad) return Token::pad();
  if (id == kSos) return Token::sos();
  if (id == kSep) return Token::sep();
  if (id == kEos) return Token::eos();
  if (id < kFirstFeature) return op_token(static_cast<std::size_t>(id - kFirstOp));
  return Token::feature(static_cast<std::uint32_t>(id - kFirstFeature));
}

std::vector<int> Vocabulary::encode(const CrossSequence& seq) const {
  std::vector<int> ids;
  ids.reserve(seq.size());
  for (const auto& t : seq.tokens) ids.push_back(id(t));
  return ids;
}

CrossSequence Vocabulary::decode(std::span<const int> ids) const {
  CrossSequence seq;
  for (int id_value : ids) seq.tokens.push_back(token(id_value));
  return seq;
}

}  // namespace saft::dsl
