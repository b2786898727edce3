#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aflab/adapter/adapter.h"
#include "aflab/backbone/encoder.h"
#include "aflab/backbone/lm.h"
#include "aflab/synthdata/synthdata.h"
#include "aflab/training/config.h"
#include "aflab/training/schedule.h"

namespace aflab::training {

struct DataSettings {
  std::uint64_t seed = 1;
  int n_pretrain = 35200;
  int n_pretrain_heldout = 250;
  int n_asr_train = 4000;
  int n_asr_heldout = 100;
  int n_zeroshot = 150;
  synthdata::GenConfig gen;
};

struct LmPretrainSettings {
  int steps = 2200;
  int batch_size = 16;
  double peak_lr = 3e-3;
  int warmup_steps = 100;
  double grad_clip = 1.0;
  double gate_threshold = 0.95;
  // Share of pretraining samples that place the content before the instruction.
  double content_first_fraction = 0.2;
  std::uint64_t seed = 1;
};

struct EncoderPretrainSettings {
  int steps = 1200;
  int batch_size = 8;
  double peak_lr = 2e-3;
  int warmup_steps = 50;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;
};

enum class CtcInit { kPretrained, kRandom };

struct TrainSettings {
  std::string preset = "alignformer";
  std::optional<backbone::Order> order;          // overrides the preset
  std::optional<adapter::AdapterMode> adapter;   // overrides the preset
  AlignmentPolicy alignment = AlignmentPolicy::kMixed;
  CtcInit ctc_init = CtcInit::kPretrained;
  int total_steps = 600;
  int batch_size = 8;  // utterances per optimizer step
  double lambda_ctc = 0.3;
  // When set, lambda_ctc is the probability that a sample trains the CTC
  // objective alone instead of a loss weight.
  bool ctc_task_mixing = false;
  double peak_lr = 2e-3;
  int warmup_steps = 50;
  double p_greedy_max = 0.5;
  double grad_clip = 1.0;
  bool train_encoder = true;
  std::uint64_t seed = 1;
  int log_every = 20;
  int agreement_samples = 32;
};

struct EvalSettings {
  int max_tokens = 24;
  int n_zeroshot = 0;  // 0 = whole split
  int n_asr = 0;
};

struct Settings {
  DataSettings data;
  backbone::LmConfig lm;
  backbone::EncoderConfig encoder;
  adapter::AdapterConfig adapter;
  LmPretrainSettings lm_pretrain;
  EncoderPretrainSettings encoder_pretrain;
  TrainSettings train;
  EvalSettings eval;
};

// Rejects unknown keys; missing keys keep their defaults.
Settings LoadSettings(const KeyValueConfig& cfg);
// Every key with its effective value.
KeyValueConfig SettingsToConfig(const Settings& s);

struct ExperimentPreset {
  std::string id;
  backbone::Order order;
  synthdata::InstructionSource source;
  adapter::AdapterMode adapter;
};

const std::vector<ExperimentPreset>& Presets();
// Throws InputError listing the valid ids.
ExperimentPreset FindPreset(const std::string& id);
// Preset with the order/adapter overrides of `train` applied.
ExperimentPreset ResolvePreset(const TrainSettings& train);
// Human-readable run label, e.g. "E1/alignformer".
std::string RunLabel(const ExperimentPreset& p);

}  // namespace aflab::training
