#pragma once

#include <span>
#include <string>
#include <vector>

#include "aflab/compute/graph.h"
#include "aflab/compute/grad_check.h"

namespace aflab::ctc {

using TokenId = int;
using TargetSequence = std::vector<TokenId>;

// Shared by every module and the dataset format.
inline constexpr TokenId kBlank = 0;

// Per-frame log-distributions over a vocabulary whose index 0 is blank.
// Construction checks T >= 1, V >= 2 and that each row's logsumexp is 0 within
// `tolerance`.
class LogProbMatrix {
 public:
  explicit LogProbMatrix(Tensor values, double tolerance = 1e-6);
  // Applies a row-wise log-softmax to arbitrary scores.
  static LogProbMatrix FromLogits(Tensor logits);

  int frames() const { return values_.rows(); }
  int vocab() const { return values_.cols(); }
  const Tensor& values() const { return values_; }
  double operator()(int t, int k) const { return values_(t, k); }

 private:
  Tensor values_;
};

enum class AlignmentMode { kGreedy, kForced };

std::string ToString(AlignmentMode mode);
AlignmentMode ParseAlignmentMode(const std::string& s);

struct AlignmentPath {
  std::vector<TokenId> labels;  // one per frame, blank allowed
  AlignmentMode mode = AlignmentMode::kGreedy;
};

// Minimum frames a CTC path needs for `target`: U plus one separator blank
// per adjacent equal pair.
int MinFramesRequired(std::span<const TokenId> target);

// Throws InputError for ids outside [1, vocab) and AlignmentInfeasibleError
// when frames < MinFramesRequired(target).
void ValidateTarget(std::span<const TokenId> target, int frames, int vocab);

// Merge runs of equal labels, then drop blanks.
TargetSequence Collapse(std::span<const TokenId> labels);

// Sum of per-frame log-probabilities along a frame labeling.
double PathLogProb(const Tensor& logp, std::span<const TokenId> labels);

struct CtcLossResult {
  double loss = 0.0;  // -log sum over valid paths
  Tensor grad;        // d loss / d logp, same shape as logp
};

// Log-space forward-backward over the blank-interleaved label sequence. The
// input need not be normalized; the loss treats entries as path scores.
CtcLossResult CtcLossAndGrad(const Tensor& logp, std::span<const TokenId> target);
double CtcLoss(const LogProbMatrix& logp, std::span<const TokenId> target);

// Graph operation: scalar CTC loss whose gradient flows into `logp`.
Var CtcLoss(Var logp, std::span<const TokenId> target);

// Per-frame argmax; ties resolve to the lowest token id.
AlignmentPath GreedyPath(const Tensor& logp);
inline AlignmentPath GreedyPath(const LogProbMatrix& logp) { return GreedyPath(logp.values()); }

// Viterbi-best valid path for `target`. Ties are broken while walking
// forward: the path advances to a later extended state only when that is
// strictly better than remaining where it is, so transitions happen as late
// as possible.
AlignmentPath ForcedAlign(const Tensor& logp, std::span<const TokenId> target);
inline AlignmentPath ForcedAlign(const LogProbMatrix& logp, std::span<const TokenId> target) {
  return ForcedAlign(logp.values(), target);
}

// Finite-difference check of CtcLossAndGrad on a small instance (T <= 8,
// U <= 3). Preconditions are checked before any differencing.
GradCheckReport CtcGradCheck(const Tensor& logp, std::span<const TokenId> target, const GradCheckOptions& options = {});

}  // namespace aflab::ctc
