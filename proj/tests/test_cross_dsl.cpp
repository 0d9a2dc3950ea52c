#include <cmath>
#include <random>

#include "doctest.h"
#include "dsl_oracle.hpp"
#include "saft/cross_dsl.hpp"
#include "saft/errors.hpp"

using namespace saft;
using namespace saft::dsl;

TEST_CASE("validate accepts well-formed sequences") {
  auto seq = parse("<sos> f0 f1 + <sep> f2 sqrt <eos>");
  auto r = validate(seq, 3);
  CHECK(r.valid);
  CHECK(r.violation == Violation::None);
  CHECK(seq.segments().size() == 2);
}

TEST_CASE("validate pinpoints the first violation") {
  auto r = validate(parse("<sos> f0 + f1 <eos>"), 2);
  CHECK_FALSE(r.valid);
  CHECK(r.violation == Violation::StackUnderflow);
  CHECK(r.position == 2);

  CHECK(validate(parse("f0 <eos>"), 2).violation == Violation::MissingSos);
  CHECK(validate(parse("<sos> f0"), 2).violation == Violation::MissingEos);
  CHECK(validate(parse("<sos> f0 f1 <eos>"), 2).violation == Violation::SegmentDepth);
  CHECK(validate(parse("<sos> <sep> f0 <eos>"), 2).violation == Violation::EmptySegment);
  CHECK(validate(parse("<sos> f5 <eos>"), 2).violation == Violation::FeatureOutOfRange);
  CHECK(validate(parse("<sos> f0 <eos> f1"), 2).violation == Violation::MisplacedDelimiter);
  CHECK(validate(parse("<sos> f0 <pad> <eos>"), 2).violation == Violation::Padding);
  CHECK(validate(CrossSequence{}, 2).violation == Violation::Empty);

  CrossSequence long_seq;
  long_seq.tokens.push_back(Token::sos());
  for (int i = 0; i < 128; ++i) {
    long_seq.tokens.push_back(Token::feature(0));
    long_seq.tokens.push_back(Token::sep());
  }
  long_seq.tokens.back() = Token::eos();
  CHECK(long_seq.size() == 257);
  CHECK(validate(long_seq, 1).violation == Violation::TooLong);
  long_seq.tokens.resize(255);
  long_seq.tokens.back() = Token::eos();
  CHECK(validate(long_seq, 1).valid);
}

TEST_CASE("parse rejects unknown tokens and feature overflow") {
  try {
    parse("<sos> f0 foo <eos>");
    FAIL("expected DslError");
  } catch (const DslError& e) {
    CHECK(e.position() == 2);
    CHECK(std::string(e.what()).find("foo") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("<sos> f3 <eos>", 3), DslError);
  CHECK_THROWS_AS(parse("<sos> f99999999999999999999 <eos>"), DslError);
  CHECK_NOTHROW(parse("<sos> f2 <eos>", 3));
}

TEST_CASE("render and parse round-trip") {
  auto seq = parse("<sos> f0 f1 / log <sep> f2 recip f1 * <eos>");
  CHECK(render(seq) == "<sos> f0 f1 / log <sep> f2 recip f1 * <eos>");
  CHECK(parse(render(seq)) == seq);
}

TEST_CASE("operator semantics at the edges") {
  CHECK(apply_binary(BinaryOp::Div, 1.0, 0.0) == doctest::Approx(1e12));
  CHECK(apply_binary(BinaryOp::Div, 1.0, -1e-13) == doctest::Approx(-1e12));
  CHECK(apply_binary(BinaryOp::Div, 1.0, -0.0) == doctest::Approx(1e12));
  CHECK(apply_unary(UnaryOp::RecipSafe, 0.0) == doctest::Approx(1e12));
  CHECK(apply_unary(UnaryOp::SqrtAbs, -4.0) == 2.0);
  CHECK(apply_unary(UnaryOp::LogAbs, 0.0) == doctest::Approx(std::log(1e-12)));
  CHECK(apply_binary(BinaryOp::Mul, 1e10, 1e10) == kValueCap);
  CHECK(apply_unary(UnaryOp::Square, -1e10) == kValueCap);
  CHECK(apply_binary(BinaryOp::Sub, 1e15, -1e15) == kValueCap);
  CHECK(std::isfinite(apply_unary(UnaryOp::Sin, 1e15)));
}

TEST_CASE("spec example: f0 + f1 evaluates elementwise") {
  Table t;
  t.columns = {{1, 2}, {10, 20}};
  t.names = {"a", "b"};
  t.target = {0, 0};
  auto seq = parse("<sos> f0 f1 + <sep> f1 f0 / <eos>");
  auto out = apply_sequence(seq, t);
  REQUIRE(out.size() == 2);
  CHECK(out.columns[0] == Column{11, 22});
  CHECK(out.columns[1] == Column{10, 10});
  CHECK(out.provenance[0] == "(a + b)");
  CHECK(out.provenance[1] == "(b / a)");
}

TEST_CASE("duplicate segments are merged and reported") {
  Table t;
  t.columns = {{1, 2}, {3, 4}};
  t.names = {"a", "b"};
  t.target = {0, 0};
  auto out = apply_sequence(parse("<sos> f0 <sep> f0 f1 * <sep> f0 <sep> f0 <eos>"), t);
  CHECK(out.size() == 2);
  CHECK(out.provenance[0].find("merged 3 duplicates") != std::string::npos);
  CHECK(out.provenance[1] == "(a * b)");
  CHECK_THROWS_AS(apply_sequence(parse("<sos> f0 + <eos>"), t), DslError);
}

TEST_CASE("postfix conversion matches the recursive reference evaluator") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::uint32_t nf = 1 + trial % 8;
    auto tree = saft::testing::random_tree(rng, 4, nf);
    auto cols = saft::testing::random_columns(rng, nf, 16);
    auto segment = infix_to_postfix(tree);
    REQUIRE(validate_segment(segment, nf).valid);
    auto values = eval_segment(segment, cols);
    for (std::size_t r = 0; r < 16; ++r)
      CHECK(std::fabs(values[r] - saft::testing::ref_eval(tree, cols, r)) <= 1e-9);

    auto back = postfix_to_tree(segment);
    CHECK(infix_to_postfix(back) == segment);
    CHECK(render_infix(back) == render_infix(tree));
  }
}

TEST_CASE("validate_segment accepts exactly the segments eval_segment can run") {
  std::mt19937_64 rng(23);
  int accepted = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const std::uint32_t nf = 1 + trial % 5;
    auto cols = saft::testing::random_columns(rng, nf, 3);
    Segment seg(1 + trial % 9);
    for (auto& tok : seg) tok = saft::testing::random_token(rng, nf, trial % 3 == 0);
    const bool ok = validate_segment(seg, nf).valid;
    bool ran = true;
    try {
      eval_segment(seg, cols);
    } catch (const DslError&) {
      ran = false;
    }
    CHECK(ok == ran);
    accepted += ok;
  }
  CHECK(accepted > 100);
}

TEST_CASE("validate agrees with the reference acceptor on whole sequences") {
  std::mt19937_64 rng(29);
  int accepted = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const std::uint32_t nf = 1 + trial % 5;
    auto cols = saft::testing::random_columns(rng, nf, 2);
    CrossSequence seq;
    if (trial % 10 != 0) seq.tokens.push_back(Token::sos());
    const int body = 1 + trial % 12;
    for (int i = 0; i < body; ++i) seq.tokens.push_back(saft::testing::random_token(rng, nf, true));
    if (trial % 7 != 0) seq.tokens.push_back(Token::eos());
    const bool ok = validate(seq, nf).valid;
    CHECK(ok == saft::testing::ref_sequence_ok(seq, cols));
    accepted += ok;
  }
  CHECK(accepted > 50);
}

TEST_CASE("vocabulary ids are stable and invertible") {
  Vocabulary vocab(3);
  CHECK(vocab.size() == 17);
  CHECK(vocab.id(Token::pad()) == 0);
  CHECK(vocab.id(Token::sos()) == 1);
  CHECK(vocab.id(Token::sep()) == 2);
  CHECK(vocab.id(Token::eos()) == 3);
  CHECK(vocab.id(Token::binary(BinaryOp::Add)) == 4);
  CHECK(vocab.id(Token::binary(BinaryOp::Div)) == 7);
  CHECK(vocab.id(Token::unary(UnaryOp::SqrtAbs)) == 8);
  CHECK(vocab.id(Token::unary(UnaryOp::RecipSafe)) == 13);
  CHECK(vocab.id(Token::feature(0)) == 14);
  CHECK(vocab.id(Token::feature(2)) == 16);
  for (int id = 0; id < static_cast<int>(vocab.size()); ++id) CHECK(vocab.id(vocab.token(id)) == id);
  CHECK_THROWS_AS(vocab.id(Token::feature(3)), DslError);
  CHECK_THROWS_AS(vocab.token(17), DslError);

  auto seq = parse("<sos> f0 f2 - square <eos>");
  CHECK(vocab.decode(vocab.encode(seq)) == seq);
}

TEST_CASE("op_token follows the agent operator order") {
  CHECK(op_token(0) == Token::binary(BinaryOp::Add));
  CHECK(op_token(3) == Token::binary(BinaryOp::Div));
  CHECK(op_token(4) == Token::unary(UnaryOp::SqrtAbs));
  CHECK_FALSE(op_is_unary(3));
  CHECK(op_is_unary(4));
  CHECK(op_is_unary(9));
}
