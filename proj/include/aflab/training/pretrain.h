#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aflab/backbone/encoder.h"
#include "aflab/backbone/lm.h"
#include "aflab/synthdata/synthdata.h"
#include "aflab/training/settings.h"

namespace aflab::training {

using ProgressFn = std::function<void(const std::string&)>;

// Epoch-wise shuffled index stream, deterministic under its seed.
class BatchSampler {
 public:
  BatchSampler(int n, std::uint64_t seed);
  int Next();

 private:
  void Shuffle();
  std::vector<int> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

// Trains every LM parameter on text samples from `start_step` to
// settings.steps. Returns the mean loss of each executed step.
std::vector<double> PretrainLm(backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                               const std::vector<synthdata::TaskSample>& corpus, const LmPretrainSettings& settings,
                               int start_step = 0, const ProgressFn& progress = nullptr);

struct GateReport {
  struct TaskCount {
    std::string task;
    int total = 0;
    int exact = 0;
  };
  std::vector<TaskCount> per_task;
  int total = 0;
  int exact = 0;
  double exact_match = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string Format() const;
};

// Exact-match of greedy instruction-first responses on held-out text samples.
GateReport EvaluateTextGate(backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                            const std::vector<synthdata::TaskSample>& heldout, double threshold);

// CTC-only training of encoder and head on every rendered utterance in
// `samples` (content audio and, when present, instruction audio).
std::vector<double> PretrainEncoder(backbone::SpeechEncoder& encoder, const backbone::Tokenizer& tok,
                                    const std::vector<synthdata::TaskSample>& samples,
                                    const EncoderPretrainSettings& settings, const ProgressFn& progress = nullptr);

// Mean greedy-decode token error rate over content audio.
double CtcTokenError(backbone::SpeechEncoder& encoder, const backbone::Tokenizer& tok,
                     const std::vector<synthdata::TaskSample>& samples);

}  // namespace aflab::training
