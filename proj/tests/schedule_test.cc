#include "aflab/training/schedule.h"

#include <gtest/gtest.h>

#include <cmath>

#include "aflab/errors.h"

namespace aflab::training {
namespace {

using ctc::AlignmentMode;

TEST(AlignmentScheduleTest, FixedPolicies) {
  Rng rng(1);
  for (int step = 0; step < 100; ++step) {
    EXPECT_EQ(AlignmentSchedule(step, 100, AlignmentPolicy::kForced, 0.5, rng), AlignmentMode::kForced);
    EXPECT_EQ(AlignmentSchedule(step, 100, AlignmentPolicy::kGreedy, 0.5, rng), AlignmentMode::kGreedy);
  }
  EXPECT_THROW(AlignmentSchedule(100, 100, AlignmentPolicy::kMixed, 0.5, rng), InputError);
}

TEST(AlignmentScheduleTest, MixedIsForcedThroughFirstHalf) {
  Rng rng(2);
  EXPECT_EQ(AlignmentSchedule(0, 14000, AlignmentPolicy::kMixed, 0.5, rng), AlignmentMode::kForced);
  for (int rep = 0; rep < 20; ++rep)
    for (int step = 0; step < 7000; step += 7)
      ASSERT_EQ(AlignmentSchedule(step, 14000, AlignmentPolicy::kMixed, 0.5, rng), AlignmentMode::kForced);
  EXPECT_NEAR(GreedyProbability(13999, 14000, AlignmentPolicy::kMixed, 0.5), 0.5, 1e-4);
}

TEST(AlignmentScheduleTest, SecondHalfGreedyFrequencyIsHalfOfPeak) {
  Rng rng(3);
  const int total = 1000;
  long greedy = 0, draws = 0;
  for (int rep = 0; rep < 200; ++rep)
    for (int step = total / 2; step < total; ++step, ++draws)
      greedy += AlignmentSchedule(step, total, AlignmentPolicy::kMixed, 0.5, rng) == AlignmentMode::kGreedy;
  ASSERT_EQ(draws, 100000);
  // Mean of the ramp p_max * u over u uniform on [0, 1) is p_max / 2 (minus half a step).
  EXPECT_NEAR(static_cast<double>(greedy) / draws, 0.25, 0.02);
}

TEST(CombinedLossTest, Arithmetic) {
  EXPECT_DOUBLE_EQ(CombinedLoss(2.0, 10.0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(CombinedLoss(2.0, 10.0, 0.3), 5.0);
  EXPECT_DOUBLE_EQ(CombinedLoss(1.5, 4.25, 1.0), CombinedLoss(4.25, 1.5, 1.0));
  EXPECT_THROW(CombinedLoss(std::nan(""), 1.0, 0.3), TrainingError);
  EXPECT_THROW(CombinedLoss(1.0, INFINITY, 0.3), TrainingError);
}

TEST(LrTest, WarmupPeakAndDecayLine) {
  const int warmup = 100, total = 1000;
  const double peak = 4e-5;
  EXPECT_EQ(LrAt(0, warmup, total, peak), 0.0);
  EXPECT_DOUBLE_EQ(LrAt(warmup, warmup, total, peak), peak);
  EXPECT_DOUBLE_EQ(LrAt(50, warmup, total, peak), peak / 2);
  // Line through (warmup, peak) and (total, 0) evaluated at the midpoint.
  const int mid = (warmup + total) / 2;
  const double line = peak + (0.0 - peak) * (mid - warmup) / static_cast<double>(total - warmup);
  EXPECT_NEAR(LrAt(mid, warmup, total, peak), line, 1e-18);
  EXPECT_EQ(LrAt(total, warmup, total, peak), 0.0);
  EXPECT_THROW(LrAt(-1, warmup, total, peak), InputError);
}

}  // namespace
}  // namespace aflab::training
