#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "ssm/errors.hpp"
#include "ssm/numerics/attention.hpp"
#include "ssm/numerics/grad_check.hpp"
#include "test_util.hpp"

using namespace ssm;
using num::ParamStore;
using num::Tape;
using num::Tensor;
using num::Var;
namespace ops = num::ops;

TEST(Tensor, ShapeInvariants) {
  Tensor t = Tensor::matrix(2, 3, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  Tensor v = Tensor::vector({1, 2, 3});
  EXPECT_EQ(v.rows(), 1u);
  EXPECT_EQ(v.cols(), 3u);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(ParamStore, NamesUniqueAndOrdered) {
  ParamStore s;
  s.add("b", Tensor::scalar(1));
  s.add("a", Tensor::scalar(2));
  EXPECT_THROW(s.add("a", Tensor::scalar(3)), ArgumentError);
  EXPECT_EQ(s.names(), (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(s.index_of("a"), 1u);
  EXPECT_THROW(s.get("missing"), ArgumentError);
}

TEST(ParamStore, GlorotBound) {
  std::mt19937_64 rng(3);
  const Tensor w = num::glorot_uniform(8, 24, rng);
  const double a = std::sqrt(6.0 / 32.0);
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), a);
  }
}

TEST(Tape, NonFiniteValueIsNumericError) {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1.0, 0.0}));
  Var b = tape.constant(Tensor::vector({0.0, 0.0}));
  EXPECT_THROW(ops::div(a, b), NumericError);
}

TEST(Softmax, Examples) {
  const Tensor a = num::softmax_rows(Tensor::matrix({{0.0, 0.0}}));
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  const Tensor b = num::softmax_rows(Tensor::matrix({{std::log(1.0), std::log(3.0)}}));
  EXPECT_NEAR(b[0], 0.25, 1e-15);
  EXPECT_NEAR(b[1], 0.75, 1e-15);
  const Tensor c = num::softmax_rows(Tensor::matrix({{1000.0, 1000.0}}));
  EXPECT_DOUBLE_EQ(c[0], 0.5);
  EXPECT_DOUBLE_EQ(c[1], 0.5);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor m = test::random_matrix(4, 7, rng, -30.0, 30.0);
    const Tensor p = num::softmax_rows(m);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double v : p.row(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, MaskedColumnsGetZero) {
  Tape tape;
  const std::vector<std::uint8_t> mask = {0, 1, 1};
  Var p = ops::softmax_rows(tape.constant(Tensor::matrix({{50.0, 0.0, 0.0}})), mask);
  EXPECT_EQ(p.value()[0], 0.0);
  EXPECT_DOUBLE_EQ(p.value()[1], 0.5);
}

TEST(CrossAttention, SingleKeyReturnsItsValue) {
  Tape tape;
  auto r = num::cross_attention(tape.constant(Tensor::matrix({{3.0, -1.0}, {0.2, 7.0}})),
                                tape.constant(Tensor::matrix({{0.5, 0.5}})), tape.constant(Tensor::matrix({{4.0, 2.0, 1.0}})));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_DOUBLE_EQ(r.output.value()(i, 0), 4.0);
    EXPECT_DOUBLE_EQ(r.output.value()(i, 2), 1.0);
  }
}

TEST(CrossAttention, ZeroQueryAveragesValues) {
  Tape tape;
  auto r = num::cross_attention(tape.constant(Tensor::matrix(1, 2)), tape.constant(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}})),
                                tape.constant(Tensor::matrix({{1.0}, {2.0}, {6.0}})));
  EXPECT_NEAR(r.output.value()[0], 3.0, 1e-15);
}

TEST(CrossAttention, HandComputedWeights) {
  Tape tape;
  auto r = num::cross_attention(tape.constant(Tensor::matrix({{1.0, 0.0}})),
                                tape.constant(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}})),
                                tape.constant(Tensor::matrix({{1.0}, {0.0}})));
  // Independent evaluation: exp(1/sqrt 2) / (exp(1/sqrt 2) + 1).
  const double e = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(r.weights.value()[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(r.output.value()[0], 0.6697615493266569, 1e-12);
}

TEST(CrossAttention, ShapeErrors) {
  Tape tape;
  Var q = tape.constant(Tensor::matrix(1, 2));
  Var k = tape.constant(Tensor::matrix(3, 3));
  Var v = tape.constant(Tensor::matrix(3, 1));
  EXPECT_THROW(num::cross_attention(q, k, v), DimensionError);
  Var k2 = tape.constant(Tensor::matrix(3, 2));
  EXPECT_THROW(num::cross_attention(q, k2, tape.constant(Tensor::matrix(2, 1))), DimensionError);
  EXPECT_THROW(num::cross_attention(q, k2, v, tape.constant(Tensor::matrix(2, 3))), DimensionError);
}

TEST(CrossAttention, ConvexCombinationAndShiftInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tape tape;
    const Tensor vt = test::random_matrix(5, 3, rng, -4, 4);
    Var q = tape.constant(test::random_matrix(2, 4, rng, -3, 3));
    Var k = tape.constant(test::random_matrix(5, 4, rng, -3, 3));
    Var v = tape.constant(vt);
    const Tensor bias = test::random_matrix(2, 5, rng);
    Tensor shifted = bias;
    for (std::size_t j = 0; j < 5; ++j) {
      shifted(0, j) += 17.0;
      shifted(1, j) -= 3.5;
    }
    auto a = num::cross_attention(q, k, v, tape.constant(bias));
    auto b = num::cross_attention(q, k, v, tape.constant(shifted));
    EXPECT_LT(test::max_abs_diff(a.output.value(), b.output.value()), 1e-12);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t j = 0; j < 5; ++j) {
          lo = std::min(lo, vt(j, c));
          hi = std::max(hi, vt(j, c));
        }
        EXPECT_GE(a.output.value()(i, c), lo - 1e-12);
        EXPECT_LE(a.output.value()(i, c), hi + 1e-12);
      }
  }
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore p;
  p.add("p", Tensor::vector({0.3, -1.2, 2.5}));
  const auto report = num::grad_check([](Tape& t, const ParamStore& s) {
    Var x = t.param(s, "p");
    return ops::sum(ops::mul(x, x));
  }, p);
  EXPECT_LT(report.max_relative_error, 1e-8);
  EXPECT_EQ(report.checked, 3u);
}

TEST(GradCheck, ConstantLossHasZeroGradient) {
  ParamStore p;
  p.add("p", Tensor::vector({0.3, -1.2}));
  Tape tape;
  Var x = tape.param(p, "p");
  Var loss = ops::add(ops::sum(ops::scale(x, 0.0)), tape.constant(Tensor::scalar(4.0)));
  tape.backward(loss);
  const auto g = tape.gradients(p);
  EXPECT_EQ(g.get("p")[0], 0.0);
  EXPECT_EQ(g.get("p")[1], 0.0);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  ParamStore p;
  p.add("p", Tensor::scalar(1.0));
  auto fn = [](Tape& t, const ParamStore& s) { return ops::sum(t.param(s, "p")); };
  EXPECT_THROW(num::grad_check(fn, p, 1e-2), ArgumentError);
  EXPECT_THROW(num::grad_check(fn, p, 1e-8), ArgumentError);
}

namespace {

using OpFn = std::function<Var(Tape&, Var, Var, Var)>;

struct OpCase {
  const char* name;
  std::size_t ar, ac, br, bc, cr, cc;
  OpFn fn;
  double lo = -1.5, hi = 1.5;  // value range of the random inputs
};

// Checks one op on random inputs; the loss projects the output onto a fixed
// random tensor so every output entry carries gradient.
double check_op(const OpCase& op, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore p;
  p.add("a", test::random_matrix(op.ar, op.ac, rng, op.lo, op.hi));
  p.add("b", test::random_matrix(op.br, op.bc, rng, op.lo, op.hi));
  p.add("c", test::random_matrix(op.cr, op.cc, rng, op.lo, op.hi));
  Tensor probe;
  {
    Tape t;
    probe = op.fn(t, t.param(p, "a"), t.param(p, "b"), t.param(p, "c")).value();
  }
  std::mt19937_64 rng2(seed + 1000);
  const Tensor w = test::random_matrix(probe.rows(), probe.cols(), rng2);
  const auto report = num::grad_check(
      [&](Tape& t, const ParamStore& s) {
        Var out = op.fn(t, t.param(s, "a"), t.param(s, "b"), t.param(s, "c"));
        return ops::sum(ops::mul(out, t.constant(w)));
      },
      p, 1e-4);
  return report.max_relative_error;
}

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"add", 3, 4, 3, 4, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::add(a, b); }});
  cases.push_back({"sub", 3, 4, 3, 4, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::sub(a, b); }});
  cases.push_back({"mul", 3, 4, 3, 4, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::mul(a, b); }});
  cases.push_back({"div", 3, 4, 3, 4, 1, 1,
                   [](Tape&, Var a, Var b, Var) { return ops::div(a, ops::add_scalar(ops::mul(b, b), 0.5)); }});
  cases.push_back({"scale", 2, 5, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::scale(a, -2.5); }});
  cases.push_back({"add_scalar", 2, 5, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::add_scalar(a, 3.0); }});
  cases.push_back({"add_row", 4, 3, 1, 3, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::add_row(a, b); }});
  cases.push_back({"matmul", 3, 4, 4, 2, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::matmul(a, b); }});
  cases.push_back({"matmul_nt", 3, 4, 5, 4, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::matmul_nt(a, b); }});
  cases.push_back({"linear", 3, 4, 2, 4, 1, 2, [](Tape&, Var a, Var b, Var c) { return ops::linear(a, b, c); }});
  cases.push_back({"sigmoid", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::sigmoid(a); }});
  cases.push_back({"relu", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::relu(a); }});
  cases.push_back({"tanh", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::tanh(a); }});
  cases.push_back({"log_floor", 3, 4, 1, 1, 1, 1,
                   [](Tape&, Var a, Var, Var) { return ops::log_floor(ops::add_scalar(ops::mul(a, a), 0.1), 1e-12); }});
  cases.push_back({"softmax_rows", 3, 5, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::softmax_rows(a); }});
  cases.push_back({"softmax_masked", 3, 5, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) {
                     static const std::vector<std::uint8_t> mask = {1, 0, 1, 1, 0};
                     return ops::softmax_rows(a, mask);
                   }});
  cases.push_back({"sum", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::sum(a); }});
  cases.push_back({"row_sums", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::row_sums(a); }});
  cases.push_back({"scale_rows", 3, 4, 3, 1, 1, 1, [](Tape&, Var a, Var b, Var) { return ops::scale_rows(a, b); }});
  cases.push_back({"mean_rows", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::mean_rows(a); }});
  cases.push_back({"concat_rows", 2, 3, 1, 3, 3, 3, [](Tape&, Var a, Var b, Var c) {
                     const std::vector<Var> parts = {a, b, c};
                     return ops::concat_rows(parts);
                   }});
  cases.push_back({"concat_cols", 2, 3, 2, 1, 2, 2, [](Tape&, Var a, Var b, Var c) {
                     const std::vector<Var> parts = {a, b, c};
                     return ops::concat_cols(parts);
                   }});
  cases.push_back({"slice_rows", 5, 3, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::slice_rows(a, 1, 3); }});
  cases.push_back({"slice_cols", 3, 5, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::slice_cols(a, 2, 2); }});
  cases.push_back({"row", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::row(a, 2); }});
  cases.push_back({"gather_rows", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) {
                     static const std::vector<std::size_t> idx = {2, 0, 2, 1};
                     return ops::gather_rows(a, idx);
                   }});
  cases.push_back({"element", 3, 4, 1, 1, 1, 1, [](Tape&, Var a, Var, Var) { return ops::element(a, 1, 3); }});
  cases.push_back({"layer_norm_rows", 3, 5, 1, 5, 1, 5,
                   [](Tape&, Var a, Var b, Var c) { return ops::layer_norm_rows(a, b, c); }});
  cases.push_back({"cross_attention", 2, 4, 5, 4, 5, 3, [](Tape& t, Var a, Var b, Var c) {
                     static const Tensor bias = Tensor::matrix({{0.0, -1.0, -2.0, 0.5, 0.0}, {1.0, 0.0, 0.0, -0.5, 0.3}});
                     return num::cross_attention(a, b, c, t.constant(bias)).output;
                   }});
  return cases;
}

}  // namespace

TEST(Autodiff, EveryOpMatchesFiniteDifferencesOver100Seeds) {
  for (const auto& op : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) worst = std::max(worst, check_op(op, seed));
    EXPECT_LT(worst, 1e-4) << op.name;
  }
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  ParamStore p;
  p.add("x", Tensor::vector({2.0}));
  Tape t;
  Var x = t.param(p, "x");
  Var y = ops::mul(ops::add(x, x), x);  // 2 x^2
  t.backward(ops::sum(y));
  EXPECT_DOUBLE_EQ(t.gradients(p).get("x")[0], 8.0);
}

TEST(AttentionBlock, HeadsSplitColumns) {
  std::mt19937_64 rng(1);
  ParamStore p;
  num::AttentionBlock::init(p, "blk", 8, rng);
  const num::AttentionBlock block{"blk", 4};
  Tape t;
  auto out = block.forward(t, p, t.constant(test::random_matrix(2, 8, rng)), t.constant(test::random_matrix(6, 8, rng)));
  EXPECT_EQ(out.output.rows(), 2u);
  EXPECT_EQ(out.output.cols(), 8u);
  ASSERT_EQ(out.head_weights.size(), 4u);
  for (const auto& w : out.head_weights) {
    EXPECT_EQ(w.cols(), 6u);
  }
  const num::AttentionBlock bad{"blk", 3};
  EXPECT_THROW(bad.forward(t, p, t.constant(Tensor::matrix(1, 8)), t.constant(Tensor::matrix(2, 8))), DimensionError);
}
