#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "aflab/compute/checkpoint.h"
#include "aflab/errors.h"
#include "aflab/ifr/ifr.h"
#include "aflab/training/config.h"
#include "aflab/training/experiment.h"
#include "aflab/training/pretrain.h"
#include "aflab/training/settings.h"

namespace aflab::training {

namespace fs = std::filesystem;

// Split names written by GenerateData.
inline constexpr char kPretrainSplit[] = "pretrain";
inline constexpr char kPretrainHeldoutSplit[] = "pretrain_heldout";
inline constexpr char kAsrTrainSplit[] = "asr_train";
inline constexpr char kAsrHeldoutSplit[] = "asr_heldout";
inline constexpr char kZeroShotSplit[] = "zeroshot";
inline constexpr char kManifestFile[] = "manifest.txt";

// Checkpoint written by a binary of another version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct CommandContext {
  std::string command;
  std::string config_path;  // empty: defaults only
  Settings settings;
  int threads = 1;
  bool force = false;
  ProgressFn progress;
};

// Creates `dir`; a non-empty existing directory is refused unless `force`,
// in which case its contents are removed first.
void PrepareOutputDir(const fs::path& dir, bool force);

// Manifest: command, config path, seed, code version, timestamps, output
// directory, thread count and every resolved setting.
void WriteManifest(const fs::path& dir, const CommandContext& ctx, std::uint64_t seed, const std::string& started,
                   const std::map<std::string, std::string>& extra = {});
std::string Timestamp();

void StampVersion(Checkpoint& ckpt);
// Reads a checkpoint and refuses one written by another code version.
Checkpoint ReadVersionedCheckpoint(const fs::path& path);

struct GenSummary {
  std::map<std::string, int> counts;
};
GenSummary GenerateData(const CommandContext& ctx, const fs::path& out);

struct PretrainSummary {
  GateReport gate;
  int lm_steps_run = 0;
  double encoder_token_error = 0.0;
};
// Writes lm.aflab, encoder.aflab and gate.txt. `resume` names an lm.aflab to
// continue from; its step counter is kept.
PretrainSummary PretrainModels(const CommandContext& ctx, const fs::path& data, const fs::path& out,
                               const fs::path& resume = {});

RunArtifacts TrainPreset(const CommandContext& ctx, const fs::path& data, const fs::path& pretrained,
                         const fs::path& out);

struct EvalSummary {
  ExperimentPreset preset;
  ifr::PresetResult result;
  std::optional<ifr::CosineSummary> cosine_trained;
  std::optional<ifr::CosineSummary> cosine_untrained;
};
// Writes eval.csv (table rows), trace.jsonl, report.txt and, for alignformer
// runs, cosine.txt.
EvalSummary EvaluateRun(const CommandContext& ctx, const fs::path& run, const fs::path& data, const fs::path& out);

// One window line per utterance; every line passes the partition checker
// before it is written. Returns the number of lines.
int DumpAlignments(const CommandContext& ctx, const fs::path& run, const fs::path& data, const std::string& split,
                   ctc::AlignmentMode mode, std::ostream& out);

// Concatenates eval.csv files of `runs` into tables.csv and tables.txt.
std::vector<ifr::TableRow> BuildTables(const std::vector<fs::path>& runs, const fs::path& out);

ExperimentPreset PresetFromRun(const Checkpoint& ckpt);

}  // namespace aflab::training
