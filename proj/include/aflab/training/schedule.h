#pragma once

#include "aflab/compute/rng.h"
#include "aflab/ctc/ctc.h"

namespace aflab::training {

// Training-time alignment policy; kMixed switches from forced to a ramped
// share of greedy alignments at the half-way step.
enum class AlignmentPolicy { kGreedy, kForced, kMixed };

std::string ToString(AlignmentPolicy policy);
AlignmentPolicy ParseAlignmentPolicy(const std::string& s);

// Greedy probability used by the mixed policy at `step`.
double GreedyProbability(int step, int total_steps, AlignmentPolicy policy, double p_max);

// Draws from `rng` only when the decision is random.
ctc::AlignmentMode AlignmentSchedule(int step, int total_steps, AlignmentPolicy policy, double p_max, Rng& rng);

// ntp + lambda * ctc; throws TrainingError on non-finite inputs.
double CombinedLoss(double ntp, double ctc, double lambda);

// Linear warmup from 0 to peak, then linear decay to 0 at total_steps.
double LrAt(int step, int warmup_steps, int total_steps, double peak_lr);

}  // namespace aflab::training
