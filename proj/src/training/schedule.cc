#include "aflab/training/schedule.h"

#include <algorithm>
#include <cmath>

#include "aflab/errors.h"

namespace aflab::training {

std::string ToString(AlignmentPolicy policy) {
  switch (policy) {
    case AlignmentPolicy::kGreedy: return "greedy";
    case AlignmentPolicy::kForced: return "forced";
    case AlignmentPolicy::kMixed: return "mixed";
  }
  return "?";
}

AlignmentPolicy ParseAlignmentPolicy(const std::string& s) {
  if (s == "greedy") return AlignmentPolicy::kGreedy;
  if (s == "forced") return AlignmentPolicy::kForced;
  if (s == "mixed") return AlignmentPolicy::kMixed;
  throw InputError("unknown alignment mode '" + s + "' (expected greedy, forced or mixed)");
}

double GreedyProbability(int step, int total_steps, AlignmentPolicy policy, double p_max) {
  switch (policy) {
    case AlignmentPolicy::kGreedy: return 1.0;
    case AlignmentPolicy::kForced: return 0.0;
    case AlignmentPolicy::kMixed: {
      const double half = total_steps / 2.0;
      if (step < half) return 0.0;
      return p_max * (step - half) / half;
    }
  }
  return 0.0;
}

ctc::AlignmentMode AlignmentSchedule(int step, int total_steps, AlignmentPolicy policy, double p_max, Rng& rng) {
  if (step < 0 || step >= total_steps) throw InputError("alignment_schedule: step out of range");
  if (policy == AlignmentPolicy::kForced) return ctc::AlignmentMode::kForced;
  if (policy == AlignmentPolicy::kGreedy) return ctc::AlignmentMode::kGreedy;
  const double p = GreedyProbability(step, total_steps, policy, p_max);
  if (p <= 0.0) return ctc::AlignmentMode::kForced;
  return rng.Bernoulli(p) ? ctc::AlignmentMode::kGreedy : ctc::AlignmentMode::kForced;
}

double CombinedLoss(double ntp, double ctc, double lambda) {
  if (!std::isfinite(ntp) || !std::isfinite(ctc))
    throw TrainingError("non-finite loss: ntp=" + std::to_string(ntp) + " ctc=" + std::to_string(ctc));
  return ntp + lambda * ctc;
}

double LrAt(int step, int warmup_steps, int total_steps, double peak_lr) {
  if (step < 0) throw InputError("lr_at: negative step");
  if (step < warmup_steps) return peak_lr * step / warmup_steps;
  if (step >= total_steps) return 0.0;
  return peak_lr * static_cast<double>(total_steps - step) / (total_steps - warmup_steps);
}

}  // namespace aflab::training
