#pragma once

// Postfix feature-cross language.
//
// A CrossSequence is "<sos> seg <sep> seg ... <eos>" where each segment is a
// postfix expression over feature tokens and operators. Evaluating every
// segment against a table yields one generated column per segment.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saft/table.hpp"

namespace saft::dsl {

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div };
enum class UnaryOp : std::uint8_t { SqrtAbs, LogAbs, Sin, Cos, Square, RecipSafe };

inline constexpr std::size_t kNumBinaryOps = 4;
inline constexpr std::size_t kNumUnaryOps = 6;
inline constexpr std::size_t kNumOps = kNumBinaryOps + kNumUnaryOps;

// Longest sequence (delimiters included) the decoder may emit.
inline constexpr std::size_t kMaxSequenceLength = 256;

// |denominator| below this is clamped for div and recip.
inline constexpr double kDenominatorFloor = 1e-12;
// Every operator result saturates at +/- this bound.
inline constexpr double kValueCap = 1e15;

struct Token {
  enum class Kind : std::uint8_t { Feature, Binary, Unary, Sos, Sep, Eos, Pad };

  Kind kind = Kind::Pad;
  std::uint32_t value = 0;  // feature index or operator code

  static Token feature(std::uint32_t index) { return {Kind::Feature, index}; }
  static Token binary(BinaryOp op) { return {Kind::Binary, static_cast<std::uint32_t>(op)}; }
  static Token unary(UnaryOp op) { return {Kind::Unary, static_cast<std::uint32_t>(op)}; }
  static Token sos() { return {Kind::Sos, 0}; }
  static Token sep() { return {Kind::Sep, 0}; }
  static Token eos() { return {Kind::Eos, 0}; }
  static Token pad() { return {Kind::Pad, 0}; }

  bool is_delimiter() const {
    return kind == Kind::Sos || kind == Kind::Sep || kind == Kind::Eos;
  }
  BinaryOp binary_op() const { return static_cast<BinaryOp>(value); }
  UnaryOp unary_op() const { return static_cast<UnaryOp>(value); }

  friend bool operator==(const Token&, const Token&) = default;
};

using Segment = std::vector<Token>;

struct CrossSequence {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const CrossSequence&, const CrossSequence&) = default;

  // Token runs between delimiters. Does not validate.
  std::vector<Segment> segments() const;
  static CrossSequence from_segments(std::span<const Segment> segments);
};

// Operator index used by the RL operator agent: binary ops first, then unary.
Token op_token(std::size_t op_index);
bool op_is_unary(std::size_t op_index);

enum class Violation {
  None,
  Empty,
  MissingSos,
  MissingEos,
  StackUnderflow,
  SegmentDepth,
  EmptySegment,
  FeatureOutOfRange,
  MisplacedDelimiter,
  Padding,
  TooLong,
};

std::string to_string(Violation v);

struct ValidityReport {
  bool valid = true;
  Violation violation = Violation::None;
  std::size_t position = 0;  // token index of the first violation

  std::string message() const;
};

ValidityReport validate(const CrossSequence& seq, std::size_t n_features);
// Validates one postfix segment (no delimiters); positions are segment-relative.
ValidityReport validate_segment(std::span<const Token> segment, std::size_t n_features);

// Expression tree over original feature indices.
struct ExprTree {
  enum class Kind : std::uint8_t { Feature, Unary, Binary };

  Kind kind = Kind::Feature;
  std::uint32_t feature = 0;
  UnaryOp unary_op = UnaryOp::SqrtAbs;
  BinaryOp binary_op = BinaryOp::Add;
  std::vector<ExprTree> children;

  static ExprTree leaf(std::uint32_t index);
  static ExprTree unary(UnaryOp op, ExprTree child);
  static ExprTree binary(BinaryOp op, ExprTree left, ExprTree right);
};

Segment infix_to_postfix(const ExprTree& tree);
// Inverse of infix_to_postfix; throws DslError on an invalid segment.
ExprTree postfix_to_tree(std::span<const Token> segment);
// Fully parenthesized infix rendering, e.g. "(f0 + sqrt(f2))".
std::string render_infix(const ExprTree& tree, std::span<const std::string> names = {});

// Scalar operator semantics (shared by the stack machine and the RL
// environment).
double apply_binary(BinaryOp op, double a, double b);
double apply_unary(UnaryOp op, double x);

std::vector<double> eval_segment(std::span<const Token> segment,
                                 std::span<const Column> columns);
std::vector<double> eval_segment(std::span<const Token> segment, const Table& table);

struct TransformedFeatureSet {
  CrossSequence source;
  std::vector<Segment> segments;  // distinct segments, first-occurrence order
  std::vector<Column> columns;
  std::vector<std::string> provenance;

  std::size_t size() const { return columns.size(); }
};

TransformedFeatureSet apply_sequence(const CrossSequence& seq, const Table& table);
TransformedFeatureSet apply_sequence(const CrossSequence& seq,
                                     std::span<const Column> columns,
                                     std::span<const std::string> names = {});

std::string token_name(const Token& token);
std::string render(const CrossSequence& seq);
std::string render_segment(std::span<const Token> segment);
// Whitespace-separated token names. When max_features is given, feature
// indices at or above it are rejected.
CrossSequence parse(std::string_view text,
                    std::optional<std::size_t> max_features = std::nullopt);

// Dense token ids for the decoder vocabulary:
// 0 <pad>, 1 <sos>, 2 <sep>, 3 <eos>, 4..13 operators, 14.. features.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kSep = 2;
  static constexpr int kEos = 3;
  static constexpr int kFirstOp = 4;
  static constexpr int kFirstFeature = kFirstOp + static_cast<int>(kNumOps);

  explicit Vocabulary(std::size_t n_features) : n_features_(n_features) {}

  std::size_t size() const { return static_cast<std::size_t>(kFirstFeature) + n_features_; }
  std::size_t n_features() const { return n_features_; }

  int id(const Token& token) const;
  Token token(int id) const;
  std::vector<int> encode(const CrossSequence& seq) const;
  CrossSequence decode(std::span<const int> ids) const;

 private:
  std::size_t n_features_;
};

}  // namespace saft::dsl
