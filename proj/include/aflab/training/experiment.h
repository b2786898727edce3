#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aflab/compute/checkpoint.h"
#include "aflab/ifr/ifr.h"
#include "aflab/training/model.h"
#include "aflab/training/pretrain.h"
#include "aflab/training/settings.h"

namespace aflab::training {

inline constexpr char kMetricsHeader[] = "step,lr,ntp_loss,ctc_loss,combined,p_greedy,alignment_m_agreement";
// Duration of one input feature frame; the encoder frame is subsample_factor times longer.
inline constexpr double kInputFrameMs = 20.0;

// Adapter initialization shared by training and the untrained-adapter baseline.
adapter::Adapter InitialAdapter(const adapter::AdapterConfig& cfg, std::uint64_t train_seed);

// Frozen pretrained LM, pretrained encoder (head re-drawn for random init)
// and a fresh adapter of the preset's kind.
SpeechLlm BuildRunModel(const Settings& settings, const ExperimentPreset& preset, const Checkpoint& lm_ckpt,
                        const Checkpoint& encoder_ckpt);

// ASR samples re-templated for the preset (order and instruction source).
std::vector<synthdata::TaskSample> TemplateForPreset(std::vector<synthdata::TaskSample> samples,
                                                     const ExperimentPreset& preset, std::uint64_t seed,
                                                     const synthdata::GenConfig& gen);

struct AlignmentStats {
  int utterances = 0;
  double m_agreement = 0.0;     // greedy m == U
  double mean_m_ratio = 0.0;    // greedy m / U
  double token_rate_ms = 0.0;   // mean audio duration per LM-input embedding
};

AlignmentStats MeasureAlignment(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, int limit);

struct RunArtifacts {
  std::string metrics_csv;
  std::uint64_t lm_checksum_before = 0;
  std::uint64_t lm_checksum_after = 0;
  AlignmentStats alignment;
  int skipped_empty = 0;
  int forced_fallbacks = 0;
  int steps = 0;
};

// Trains encoder, CTC head and adapter against the frozen LM. When
// `out_dir` is non-empty, writes metrics.csv, model.aflab and alignment.txt
// there; on divergence it writes last_good.aflab and throws TrainingError.
RunArtifacts RunExperiment(SpeechLlm& model, const ExperimentPreset& preset, const TrainSettings& train,
                           const std::vector<synthdata::TaskSample>& train_samples,
                           const std::vector<synthdata::TaskSample>& heldout, const std::filesystem::path& out_dir,
                           const ProgressFn& progress = nullptr);

// Evaluation splits samples across `threads` workers; results do not depend on
// the worker count.

// Zero-shot tasks under the instruction-first template with text instructions.
ifr::IfrReport EvaluateZeroShot(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, int max_tokens,
                                int threads = 1);

// Mean token error of LM transcripts under the preset's training template.
double EvaluateAsr(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, const ExperimentPreset& preset,
                   int max_tokens, int threads = 1);

// Cosine similarity between forced-aligned adapter outputs (m = U) and the LM
// embeddings of the transcript tokens.
ifr::CosineSummary EvaluateCosine(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples,
                                  int threads = 1);

}  // namespace aflab::training
