#include <gtest/gtest.h>

#include "aflab/compute/ops.h"
#include "aflab/compute/rng.h"
#include "aflab/errors.h"
#include "aflab/windowing/windowing.h"

namespace aflab::windowing {
namespace {

TEST(PathToWindows, LeadingAndInteriorBlanksJoinNextToken) {
  WindowSpec spec = PathToWindows(std::vector<int>{0, 0, 3, 3, 0, 5});
  EXPECT_EQ(spec.windows, (std::vector<Window>{{3, 0, 4}, {5, 4, 6}}));
  EXPECT_EQ(spec.total_frames, 6);
}

TEST(PathToWindows, TrailingBlanksJoinLastWindow) {
  WindowSpec spec = PathToWindows(std::vector<int>{3, 0, 0});
  EXPECT_EQ(spec.windows, (std::vector<Window>{{3, 0, 3}}));
}

TEST(PathToWindows, AllBlankHasNoWindows) {
  WindowSpec spec = PathToWindows(std::vector<int>{0, 0, 0, 0});
  EXPECT_EQ(spec.count(), 0);
  EXPECT_EQ(CheckPartition(spec), "");
  BoolMatrix mask = WindowsToMask(spec);
  EXPECT_EQ(mask.rows(), 0);
  EXPECT_EQ(mask.cols(), 4);
}

TEST(PathToWindows, RepeatsSeparatedByBlankAreDistinctWindows) {
  WindowSpec spec = PathToWindows(std::vector<int>{2, 2, 0, 2});
  EXPECT_EQ(spec.windows, (std::vector<Window>{{2, 0, 2}, {2, 2, 4}}));
}

TEST(WindowsToMask, DirectTranscription) {
  WindowSpec spec{{{3, 0, 4}, {5, 4, 6}}, 6};
  BoolMatrix mask = WindowsToMask(spec);
  const bool expected[2][6] = {{1, 1, 1, 1, 0, 0}, {0, 0, 0, 0, 1, 1}};
  for (int i = 0; i < 2; ++i)
    for (int t = 0; t < 6; ++t) EXPECT_EQ(mask(i, t), expected[i][t]);
  EXPECT_TRUE(IsColumnPartition(mask));
  EXPECT_EQ(MaskToWindows(mask, spec.tokens()), spec);
}

TEST(ForcedPaths, PartitionWithOneWindowPerTargetToken) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> target;
    for (int i = 0; i < 4; ++i) target.push_back(rng.UniformInt(1, 5));
    Tensor lp(12, 6);
    for (double& v : lp.data()) v = rng.Normal();
    LogSoftmaxRowsInPlace(lp);
    WindowSpec spec = PathToWindows(ctc::ForcedAlign(lp, target));
    EXPECT_EQ(CheckPartition(spec), "");
    EXPECT_EQ(spec.count(), 4);
    EXPECT_EQ(spec.tokens(), target);
    EXPECT_TRUE(IsColumnPartition(WindowsToMask(spec)));
  }
}

TEST(TokenRate, Durations) {
  WindowSpec uniform{{{1, 0, 4}, {2, 4, 8}, {3, 8, 12}}, 12};
  EXPECT_DOUBLE_EQ(MeanWindowDurationMs(uniform, 80.0), 320.0);
  WindowSpec single{{{1, 0, 7}}, 7};
  EXPECT_DOUBLE_EQ(MeanWindowDurationMs(single, 80.0), 7 * 80.0);
  EXPECT_THROW(MeanWindowDurationMs(WindowSpec{{}, 5}, 80.0), InputError);
}

TEST(FixedWindows, ChunksWithRemainder) {
  EXPECT_EQ(FixedWindows(8, 4).count(), 2);
  WindowSpec five = FixedWindows(5, 4);
  EXPECT_EQ(five.windows.back().start, 4);
  EXPECT_EQ(five.windows.back().end, 5);
  EXPECT_EQ(FixedWindows(6, 1).count(), 6);
  EXPECT_THROW(FixedWindows(6, 0), InputError);
}

TEST(WindowLine, FormatAndParse) {
  WindowSpec spec{{{3, 0, 4}, {5, 4, 6}}, 6};
  const std::string line = FormatWindowLine("utt7", spec);
  EXPECT_EQ(line, "utt7 3:0-4 5:4-6");
  auto [id, back] = ParseWindowLine(line);
  EXPECT_EQ(id, "utt7");
  EXPECT_EQ(back, spec);
  EXPECT_THROW(ParseWindowLine("utt 3-0:4"), FormatError);
}

TEST(MaskToWindows, RejectsNonPartition) {
  BoolMatrix overlap(2, 3, false);
  overlap.Set(0, 0, true);
  overlap.Set(0, 1, true);
  overlap.Set(1, 1, true);
  overlap.Set(1, 2, true);
  EXPECT_THROW(MaskToWindows(overlap, std::vector<int>{1, 2}), InputError);
}

}  // namespace
}  // namespace aflab::windowing
