#include <cmath>
#include <cstdint>
#include <filesystem>

#include <gtest/gtest.h>

#include "aflab/compute/checkpoint.h"
#include "aflab/compute/grad_check.h"
#include "aflab/compute/ops.h"
#include "aflab/compute/optimizer.h"
#include "aflab/errors.h"

namespace aflab {
namespace {

Tensor RandomTensor(int rows, int cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = scale * rng.Normal();
  return t;
}

// Reduction order must not depend on where the allocator put the buffer.
TEST(Tensor, BuffersAre64ByteAligned) {
  for (int n = 1; n < 40; ++n) {
    Tensor a(n, 3);
    Tensor b = a;
    Tensor c(1, n, std::vector<double>(n, 1.0));
    for (const Tensor* t : {&a, &b, &c}) EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t->data().data()) % 64, 0u);
  }
}

TEST(MatMul, IdentityAndDot) {
  Graph g(false);
  Tensor m = Tensor::FromRows({{1, 2}, {3, 4}});
  EXPECT_EQ(MatMul(g.Constant(Tensor::FromRows({{1, 0}, {0, 1}})), g.Constant(m)).value(), m);
  EXPECT_EQ(MatMul(g.Constant(Tensor::FromRows({{1, 2}})), g.Constant(Tensor::FromRows({{3}, {4}}))).scalar(), 11.0);
}

TEST(MatMul, ShapeMismatchThrows) {
  Graph g;
  EXPECT_THROW(MatMul(g.Constant(Tensor(2, 3)), g.Constant(Tensor(2, 3))), DimensionError);
}

TEST(MatMul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  auto report = CheckInputGradients(
      [](Graph&, const std::vector<Var>& in) {
        // Weighted sum so the upstream gradient is not all ones.
        Var w = in[0].graph().Constant(Tensor::FromRows({{0.3, -1.2}, {0.7, 0.1}, {-0.4, 2.0}}));
        return Sum(Mul(MatMul(in[0], in[1]), w));
      },
      {RandomTensor(3, 4, rng), RandomTensor(4, 2, rng)});
  EXPECT_TRUE(report.passed) << report.worst_entry;
  EXPECT_EQ(report.checked, 20);
}

TEST(Softmax, SymmetricAndStable) {
  Graph g(false);
  Tensor s = SoftmaxRows(g.Constant(Tensor::FromRows({{0, 0}, {1000, 0}}))).value();
  EXPECT_DOUBLE_EQ(s(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.5);
  EXPECT_NEAR(s(1, 0), 1.0, 1e-15);
  EXPECT_TRUE(s.AllFinite());
  EXPECT_LT(s(1, 1), 1e-300);
}

TEST(Softmax, MatchesDirectFormula) {
  Rng rng(7);
  Tensor x = RandomTensor(5, 9, rng, 3.0);
  Graph g(false);
  Tensor s = SoftmaxRows(g.Constant(x)).value();
  for (int r = 0; r < x.rows(); ++r) {
    double denom = 0.0;
    for (int c = 0; c < x.cols(); ++c) denom += std::exp(x(r, c));
    double row_sum = 0.0;
    for (int c = 0; c < x.cols(); ++c) {
      EXPECT_NEAR(s(r, c), std::exp(x(r, c)) / denom, 1e-12);
      row_sum += s(r, c);
    }
    EXPECT_NEAR(row_sum, 1.0, 1e-9);
  }
}

TEST(LayerNorm, ConstantRowNormalizesToZero) {
  Graph g(false);
  Var gain = g.Constant(Tensor(1, 4, 1.0));
  Var bias = g.Constant(Tensor(1, 4, 0.0));
  Tensor y = LayerNorm(g.Constant(Tensor(1, 4, 3.5)), gain, bias).value();
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, AlreadyNormalizedRow) {
  Graph g(false);
  Tensor y = LayerNorm(g.Constant(Tensor::FromRows({{1, -1}})), g.Constant(Tensor(1, 2, 1.0)),
                       g.Constant(Tensor(1, 2, 0.0)))
                 .value();
  EXPECT_NEAR(y(0, 0), 1.0, 1e-5);
  EXPECT_NEAR(y(0, 1), -1.0, 1e-5);
}

TEST(CrossEntropy, Conventions) {
  Graph g(false);
  std::vector<int> targets = {2, 0};
  Tensor confident = Tensor::FromRows({{-50, -50, 50}, {60, 0, 0}});
  EXPECT_NEAR(CrossEntropy(g.Constant(confident), targets, {true, true}).scalar(), 0.0, 1e-12);
  Tensor uniform(2, 5, 0.3);
  EXPECT_NEAR(CrossEntropy(g.Constant(uniform), targets, {true, true}).scalar(), std::log(5.0), 1e-12);
  std::vector<int> bad = {7, 0};
  EXPECT_THROW(CrossEntropy(g.Constant(uniform), bad, {true, true}), InputError);
}

TEST(CrossEntropy, AllMaskedGivesZeroLossAndGradient) {
  Graph g(true);
  Var logits = g.Input(Tensor::FromRows({{1, 2, 3}}));
  std::vector<int> targets = {1};
  Var loss = CrossEntropy(logits, targets, {false});
  EXPECT_EQ(loss.scalar(), 0.0);
  g.Backward(loss);
  if (g.has_grad(logits.id())) {
    for (double v : logits.grad().data()) EXPECT_EQ(v, 0.0);
  }
}

// Every differentiable op against central differences on random small shapes.
class OpGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(OpGradientTest, AllOpsPassFiniteDifferenceCheck) {
  Rng rng(100 + GetParam());
  const int n = rng.UniformInt(1, 4);
  const int d = 2 * rng.UniformInt(1, 3);
  Tensor weights = RandomTensor(n, d, rng);
  auto weighted = [weights](Var x) { return Sum(Mul(x, x.graph().Constant(weights))); };
  std::vector<std::pair<std::string, InputScalarFn>> cases = {
      {"softmax", [&](Graph&, const std::vector<Var>& in) { return weighted(SoftmaxRows(in[0])); }},
      {"log_softmax", [&](Graph&, const std::vector<Var>& in) { return weighted(LogSoftmaxRows(in[0])); }},
      {"gelu", [&](Graph&, const std::vector<Var>& in) { return weighted(Gelu(in[0])); }},
      {"layer_norm",
       [&](Graph&, const std::vector<Var>& in) { return weighted(LayerNorm(in[0], in[1], in[2])); }},
      {"add_bias", [&](Graph&, const std::vector<Var>& in) { return weighted(AddRowBias(in[0], in[2])); }},
      {"rope", [&](Graph&, const std::vector<Var>& in) { return weighted(Rope(in[0], d / 2, 3)); }},
      {"slice_concat",
       [&](Graph&, const std::vector<Var>& in) {
         Var top = SliceRows(in[0], 0, 1);
         Var rest = SliceRows(in[0], 1, in[0].rows());
         return weighted(ConcatRows({top, rest}));
       }},
      {"self_attention_causal",
       [&](Graph&, const std::vector<Var>& in) { return weighted(MultiHeadAttention(in[0], in[0], in[0], 2, nullptr, true)); }},
  };
  std::vector<Tensor> inputs = {RandomTensor(n, d, rng), RandomTensor(1, d, rng), RandomTensor(1, d, rng)};
  for (const auto& [name, fn] : cases) {
    auto report = CheckInputGradients(fn, inputs);
    EXPECT_TRUE(report.passed) << name << ": " << report.worst_entry;
  }
}

INSTANTIATE_TEST_SUITE_P(Randomized, OpGradientTest, ::testing::Range(0, 6));

TEST(Attention, CrossAttentionGradientWithMask) {
  Rng rng(5);
  BoolMatrix mask(2, 5, false);
  for (int t = 0; t < 3; ++t) mask.Set(0, t, true);
  for (int t = 3; t < 5; ++t) mask.Set(1, t, true);
  Tensor w = RandomTensor(2, 4, rng);
  auto report = CheckInputGradients(
      [&](Graph& g, const std::vector<Var>& in) {
        return Sum(Mul(MultiHeadAttention(in[0], in[1], in[2], 2, &mask), g.Constant(w)));
      },
      {RandomTensor(2, 4, rng), RandomTensor(5, 4, rng), RandomTensor(5, 4, rng)});
  EXPECT_TRUE(report.passed) << report.worst_entry;
}

TEST(Attention, MaskedFramesHaveNoInfluence) {
  Rng rng(9);
  BoolMatrix mask(1, 4, false);
  mask.Set(0, 2, true);
  Tensor q = RandomTensor(1, 4, rng);
  Tensor kv = RandomTensor(4, 4, rng);
  Graph g1(false);
  Tensor a = MultiHeadAttention(g1.Constant(q), g1.Constant(kv), g1.Constant(kv), 2, &mask).value();
  kv(0, 1) += 5.0;
  kv(3, 0) -= 2.0;
  Graph g2(false);
  Tensor b = MultiHeadAttention(g2.Constant(q), g2.Constant(kv), g2.Constant(kv), 2, &mask).value();
  EXPECT_EQ(a, b);
}

TEST(Parameters, FrozenParametersNeverChange) {
  Rng rng(3);
  Linear frozen("frozen", 3, 3, rng);
  Linear trained("trained", 3, 1, rng);
  ParameterList all;
  frozen.Collect(all);
  trained.Collect(all);
  ParameterList frozen_list;
  frozen.Collect(frozen_list);
  SetTrainable(frozen_list, false);
  const std::uint64_t before = ChecksumParameters(frozen_list);
  AdamW opt(all);
  for (int step = 0; step < 5; ++step) {
    ZeroGrads(all);
    Graph g;
    Var loss = Sum(trained.Forward(g, frozen.Forward(g, g.Constant(RandomTensor(4, 3, rng)))));
    g.Backward(loss);
    for (Parameter* p : frozen_list)
      for (double v : p->grad.data()) EXPECT_EQ(v, 0.0);
    opt.Step(0.1);
  }
  EXPECT_EQ(ChecksumParameters(frozen_list), before);
}

TEST(Checkpoint, RoundTripAndVersionCheck) {
  Rng rng(11);
  Linear layer("adapter.proj", 2, 3, rng);
  ParameterList params;
  layer.Collect(params);
  Checkpoint ckpt;
  ckpt.metadata["tokenizer.symbols"] = "ab";
  ckpt.AddParameters(params);
  std::string bytes = SerializeCheckpoint(ckpt);
  EXPECT_EQ(bytes.substr(0, 5), "AFLAB");
  Checkpoint back = DeserializeCheckpoint(bytes);
  EXPECT_EQ(back.metadata.at("tokenizer.symbols"), "ab");
  ASSERT_NE(back.Find("adapter.proj.weight"), nullptr);
  EXPECT_EQ(*back.Find("adapter.proj.weight"), layer.weight.value);

  bytes[5] = 7;  // version field
  try {
    DeserializeCheckpoint(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 7"), std::string::npos);
  }
  EXPECT_THROW(DeserializeCheckpoint("NOTAF"), FormatError);
}

TEST(Forward, DeterministicGivenInputs) {
  Rng rng(4);
  TransformerBlock block("b", 8, 2, 16, rng);
  Tensor x = RandomTensor(5, 8, rng);
  Graph g1(false), g2(false);
  EXPECT_EQ(block.Forward(g1, g1.Constant(x), true, true).value(), block.Forward(g2, g2.Constant(x), true, true).value());
}

}  // namespace
}  // namespace aflab
