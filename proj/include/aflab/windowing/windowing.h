#pragma once

#include <span>
#include <string>
#include <vector>

#include "aflab/compute/tensor.h"
#include "aflab/ctc/ctc.h"

namespace aflab::windowing {

using ctc::TokenId;

// One non-blank token and the contiguous frames [start, end) it summarizes.
struct Window {
  TokenId token = 0;
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  friend bool operator==(const Window&, const Window&) = default;
};

struct WindowSpec {
  std::vector<Window> windows;
  int total_frames = 0;

  int count() const { return static_cast<int>(windows.size()); }
  std::vector<TokenId> tokens() const;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

// Each maximal run of one non-blank label becomes a window. Blank frames join
// the window of the next run; blanks after the last run join the last window.
// An all-blank path yields no windows.
WindowSpec PathToWindows(std::span<const TokenId> labels);
inline WindowSpec PathToWindows(const ctc::AlignmentPath& path) { return PathToWindows(path.labels); }

// Consecutive chunks of k frames (the last may be shorter); tokens are unset (0).
WindowSpec FixedWindows(int total_frames, int k);

// m x T mask, row i true exactly on window i.
BoolMatrix WindowsToMask(const WindowSpec& spec);

// Inverse of WindowsToMask given the window tokens. Throws InputError when the
// mask rows are not contiguous runs forming a partition.
WindowSpec MaskToWindows(const BoolMatrix& mask, std::span<const TokenId> tokens);

// Empty string when `spec` is a sorted contiguous partition of [0, T) (or has
// no windows), otherwise a description of the first violation.
std::string CheckPartition(const WindowSpec& spec);
bool IsColumnPartition(const BoolMatrix& mask);

// Mean window duration in ms; throws InputError for m = 0.
double MeanWindowDurationMs(const WindowSpec& spec, double frame_ms);

// "id token:start-end token:start-end ..."
std::string FormatWindowLine(const std::string& utterance_id, const WindowSpec& spec);
// Parses FormatWindowLine output; total_frames is taken as the last end.
std::pair<std::string, WindowSpec> ParseWindowLine(const std::string& line);

}  // namespace aflab::windowing
