#include <cmath>
#include <functional>
#include <limits>

#include <gtest/gtest.h>

#include "aflab/compute/ops.h"
#include "aflab/compute/rng.h"
#include "aflab/ctc/ctc.h"
#include "aflab/errors.h"

namespace aflab::ctc {
namespace {

Tensor RandomLogProbs(int T, int V, Rng& rng, double scale = 1.5) {
  Tensor t(T, V);
  for (double& v : t.data()) v = scale * rng.Normal();
  LogSoftmaxRowsInPlace(t);
  return t;
}

// Enumerates all V^T frame labelings; calls `visit` on those collapsing to target.
void ForEachValidPath(int T, int V, const TargetSequence& target,
                      const std::function<void(const std::vector<int>&)>& visit) {
  std::vector<int> labels(T, 0);
  while (true) {
    if (Collapse(labels) == target) visit(labels);
    int pos = 0;
    while (pos < T && ++labels[pos] == V) labels[pos++] = 0;
    if (pos == T) break;
  }
}

double BruteForceLoss(const Tensor& logp, const TargetSequence& target) {
  double total = 0.0;
  ForEachValidPath(logp.rows(), logp.cols(), target,
                   [&](const std::vector<int>& p) { total += std::exp(PathLogProb(logp, p)); });
  return -std::log(total);
}

double BruteForceBest(const Tensor& logp, const TargetSequence& target) {
  double best = -std::numeric_limits<double>::infinity();
  ForEachValidPath(logp.rows(), logp.cols(), target,
                   [&](const std::vector<int>& p) { best = std::max(best, PathLogProb(logp, p)); });
  return best;
}

TEST(Collapse, Rules) {
  EXPECT_EQ(Collapse(std::vector<int>{0, 0, 0}), TargetSequence{});
  EXPECT_EQ(Collapse(std::vector<int>{2, 2, 0, 2}), (TargetSequence{2, 2}));
  EXPECT_EQ(Collapse(std::vector<int>{0, 1, 1, 3, 0, 3}), (TargetSequence{1, 3, 3}));
}

TEST(CtcLoss, SingleFrameSinglePath) {
  Rng rng(1);
  Tensor lp = RandomLogProbs(1, 4, rng);
  EXPECT_NEAR(CtcLoss(LogProbMatrix(lp), std::vector<int>{2}), -lp(0, 2), 1e-12);
}

TEST(CtcLoss, EmptyTargetIsAllBlank) {
  Rng rng(2);
  Tensor lp = RandomLogProbs(2, 3, rng);
  EXPECT_NEAR(CtcLoss(LogProbMatrix(lp), TargetSequence{}), -(lp(0, 0) + lp(1, 0)), 1e-12);
}

TEST(CtcLoss, MatchesEnumerationT4U2V3) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor lp = RandomLogProbs(4, 3, rng);
    TargetSequence target = {rng.UniformInt(1, 2), rng.UniformInt(1, 2)};
    EXPECT_NEAR(CtcLoss(LogProbMatrix(lp), target), BruteForceLoss(lp, target), 1e-6);
  }
}

TEST(CtcLoss, InfeasibleAndOutOfRange) {
  Rng rng(4);
  Tensor lp = RandomLogProbs(2, 3, rng);
  EXPECT_THROW(CtcLoss(LogProbMatrix(lp), std::vector<int>{1, 1}), AlignmentInfeasibleError);
  EXPECT_THROW(CtcLoss(LogProbMatrix(lp), std::vector<int>{1, 2, 1}), AlignmentInfeasibleError);
  EXPECT_THROW(CtcLoss(LogProbMatrix(lp), std::vector<int>{3}), InputError);
  EXPECT_THROW(CtcLoss(LogProbMatrix(lp), std::vector<int>{0}), InputError);
}

TEST(LogProbMatrix, RejectsUnnormalizedRows) {
  EXPECT_THROW(LogProbMatrix(Tensor::FromRows({{0.0, 0.0}})), InputError);
  EXPECT_THROW(LogProbMatrix(Tensor(1, 1, 0.0)), InputError);
  EXPECT_NO_THROW(LogProbMatrix::FromLogits(Tensor::FromRows({{0.0, 0.0}})));
}

TEST(GreedyPath, AllBlankAndCollapse) {
  Tensor lp(3, 4, -5.0);
  for (int t = 0; t < 3; ++t) lp(t, 0) = -0.01;
  EXPECT_TRUE(Collapse(GreedyPath(lp).labels).empty());

  const std::vector<int> peaks = {0, 3, 3, 0, 5};
  Tensor lp2(5, 6, -4.0);
  for (int t = 0; t < 5; ++t) lp2(t, peaks[t]) = -0.1;
  AlignmentPath path = GreedyPath(lp2);
  EXPECT_EQ(path.labels, peaks);
  EXPECT_EQ(Collapse(path.labels), (TargetSequence{3, 5}));
}

TEST(GreedyPath, TiesGoToLowestId) {
  Tensor lp(1, 3, std::log(1.0 / 3.0));
  EXPECT_EQ(GreedyPath(lp).labels, std::vector<int>{0});
}

TEST(GreedyPath, MatchesIndependentBestPathDecode) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor lp = RandomLogProbs(12, 5, rng);
    // Best path: argmax of each frame independently, then decode.
    TargetSequence decoded;
    int prev = -1;
    for (int t = 0; t < lp.rows(); ++t) {
      int best = 0;
      double best_v = lp(t, 0);
      for (int k = 1; k < lp.cols(); ++k)
        if (lp(t, k) > best_v) best_v = lp(t, best = k);
      if (best != prev && best != 0) decoded.push_back(best);
      prev = best;
    }
    EXPECT_EQ(Collapse(GreedyPath(lp).labels), decoded);
  }
}

TEST(ForcedAlign, SinglePathCases) {
  Tensor lp(3, 4, std::log(0.01 / 3));
  const std::vector<int> target = {2, 3, 1};
  for (int t = 0; t < 3; ++t) lp(t, target[t]) = std::log(0.99);
  EXPECT_EQ(ForcedAlign(lp, target).labels, target);

  Rng rng(6);
  Tensor lp2 = RandomLogProbs(3, 3, rng);
  EXPECT_EQ(ForcedAlign(lp2, std::vector<int>{2, 2}).labels, (std::vector<int>{2, 0, 2}));
}

TEST(ForcedAlign, TieBreakStaysInCurrentState) {
  // Uniform distributions: every valid path ties, so the alignment emits each
  // token as late as possible and the trailing blank is never entered.
  Tensor lp(4, 3, std::log(1.0 / 3.0));
  EXPECT_EQ(ForcedAlign(lp, std::vector<int>{1, 2}).labels, (std::vector<int>{0, 0, 1, 2}));
}

TEST(ForcedAlign, MatchesEnumerationT5U2V3) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor lp = RandomLogProbs(5, 3, rng);
    TargetSequence target = {rng.UniformInt(1, 2), rng.UniformInt(1, 2)};
    AlignmentPath path = ForcedAlign(lp, target);
    EXPECT_EQ(path.mode, AlignmentMode::kForced);
    EXPECT_EQ(Collapse(path.labels), target);
    EXPECT_NEAR(PathLogProb(lp, path.labels), BruteForceBest(lp, target), 1e-9);
  }
}

TEST(ForcedAlign, InfeasibleThrows) {
  Rng rng(8);
  EXPECT_THROW(ForcedAlign(RandomLogProbs(2, 3, rng), std::vector<int>{1, 1}), AlignmentInfeasibleError);
}

TEST(Properties, LossDominatesForcedPathAndRelabelingCovariance) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int V = rng.UniformInt(3, 5);
    const int U = rng.UniformInt(0, 3);
    TargetSequence target;
    for (int i = 0; i < U; ++i) target.push_back(rng.UniformInt(1, V - 1));
    const int T = MinFramesRequired(target) + rng.UniformInt(0, 4);
    if (T < 1) continue;
    Tensor lp = RandomLogProbs(T, V, rng);
    const double loss = CtcLoss(LogProbMatrix(lp), target);
    AlignmentPath forced = ForcedAlign(lp, target);
    EXPECT_EQ(Collapse(forced.labels), target);
    // The sum over paths dominates the best path, so the loss is bounded above.
    EXPECT_LE(loss, -PathLogProb(lp, forced.labels) + 1e-12);

    // Reverse the non-blank ids consistently in columns and target.
    auto relabel = [V](int k) { return k == 0 ? 0 : V - k; };
    Tensor permuted(T, V);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < V; ++k) permuted(t, relabel(k)) = lp(t, k);
    TargetSequence mapped;
    for (int k : target) mapped.push_back(relabel(k));
    EXPECT_NEAR(CtcLoss(LogProbMatrix(permuted), mapped), loss, 1e-10);
  }
}

TEST(CtcGradCheck, RandomInstancePasses) {
  Rng rng(10);
  auto report = CtcGradCheck(RandomLogProbs(4, 3, rng), std::vector<int>{1, 2});
  EXPECT_TRUE(report.passed) << report.worst_entry;
}

TEST(CtcGradCheck, SinglePathGradientIsMinusOne) {
  Rng rng(11);
  Tensor lp = RandomLogProbs(1, 3, rng);
  CtcLossResult r = CtcLossAndGrad(lp, std::vector<int>{2});
  EXPECT_NEAR(r.grad(0, 2), -1.0, 1e-12);
  EXPECT_EQ(r.grad(0, 0), 0.0);
  EXPECT_EQ(r.grad(0, 1), 0.0);
  EXPECT_TRUE(CtcGradCheck(lp, std::vector<int>{2}).passed);
}

TEST(CtcGradCheck, RejectsInfeasibleBeforeDifferencing) {
  Rng rng(12);
  EXPECT_THROW(CtcGradCheck(RandomLogProbs(2, 3, rng), std::vector<int>{1, 1}), AlignmentInfeasibleError);
  EXPECT_THROW(CtcGradCheck(RandomLogProbs(9, 3, rng), std::vector<int>{1}), InputError);
}

TEST(CtcLoss, GradientThroughLogSoftmaxChain) {
  Rng rng(13);
  Tensor logits(6, 4);
  for (double& v : logits.data()) v = rng.Normal();
  const TargetSequence target = {3, 1, 3};
  auto report = CheckInputGradients(
      [&](Graph&, const std::vector<Var>& in) { return CtcLoss(LogSoftmaxRows(in[0]), target); }, {logits});
  EXPECT_TRUE(report.passed) << report.worst_entry;
}

}  // namespace
}  // namespace aflab::ctc
