#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aflab/backbone/template.h"
#include "aflab/backbone/tokenizer.h"
#include "aflab/compute/tensor.h"

namespace aflab::synthdata {

using backbone::Order;

enum class Task { kTranscribe, kRepeat, kCipherTranslate, kMcClassify, kCountMc };
enum class InstructionSource { kText, kRenderedAudio, kRenderedAudioX5 };

std::string ToString(Task task);
Task ParseTask(const std::string& s);
std::string ToString(InstructionSource source);
InstructionSource ParseInstructionSource(const std::string& s);
bool IsZeroShotTask(Task task);

// Spoken content is drawn from the source alphabet; cipher output uses a
// disjoint target alphabet of the same size.
inline constexpr char kSourceAlphabet[] = "abcdefgh";
inline constexpr char kCipherAlphabet[] = "stuvwxyz";
// Label set of the letter-group classification task; together they cover the source alphabet.
inline const std::string kLetterGroups[3] = {"abc", "def", "gh"};
inline constexpr int kMinContentLength = 3;
inline constexpr int kMaxContentLength = 6;

inline constexpr char kTranscribePrompt[] = "Transcribe the audio clip into text.";
inline constexpr char kRepeatPrompt[] = "Repeat exactly what the user says word by word.";
inline constexpr char kCipherPrompt[] = "Translate to cipher.";
inline constexpr char kAnswerPrefix[] = "The answer is: ";

// Five spoken ASR instructions; the first is the repeat prompt.
const std::vector<std::string>& AsrParaphrases();

// Fixed permutation from the source to the cipher alphabet.
char CipherChar(char c);
std::string Cipher(const std::string& text);

struct RenderSpec {
  int frames_lo = 12;
  int frames_hi = 20;
  int feature_dim = 16;
  double noise_std = 0.3;
  double speaker_offset = 0.0;
  std::uint64_t seed = 0;
};

// Prototype feature vector of a token id; fixed across runs and platforms.
std::vector<double> Prototype(int token, int feature_dim);

// Rows are frames. Values are rounded to float32 so that the on-disk blob
// reproduces them exactly.
Tensor RenderSpeech(const std::vector<int>& tokens, const RenderSpec& spec);

// Generation knobs shared by all corpora.
struct GenConfig {
  RenderSpec render;
  double speaker_std = 0.5;
};

struct TaskSample {
  std::string id;
  Task task = Task::kTranscribe;
  Order order = Order::kInstructionFirst;
  InstructionSource source = InstructionSource::kText;
  std::string content;      // spoken (or, for text samples, written) input
  std::string instruction;  // text form of the instruction
  std::string reference;    // expected response
  std::optional<std::string> answer_format;
  std::vector<std::string> choices;  // values behind A, B, C
  Tensor features;                   // content audio; empty for text samples
  Tensor instruction_features;       // rendered instruction audio, if any
  bool has_audio() const { return features.rows() > 0; }
};

// Text-only instruction-first samples, balanced over the five tasks.
std::vector<TaskSample> GenPretrainCorpus(int n, std::uint64_t seed);

// Transcribe/repeat samples with rendered content audio.
std::vector<TaskSample> GenAlignmentCorpus(int n, Order order, InstructionSource source, std::uint64_t seed,
                                           const GenConfig& cfg = {});

// Sets instruction text (and audio, for rendered sources) of an ASR sample.
void ApplyAlignmentTemplate(TaskSample& sample, Order order, InstructionSource source, std::uint64_t seed,
                            const GenConfig& cfg = {});

// Cipher and multiple-choice tasks over rendered content audio; the answer
// key cycles A, B, C within each task.
std::vector<TaskSample> GenZeroShotEval(int n, std::uint64_t seed, const GenConfig& cfg = {});

// Recomputes the expected answer from the instruction text and content alone.
std::string SolveTask(const TaskSample& sample);
// Throws InputError naming the first sample whose reference disagrees.
void VerifyReferences(const std::vector<TaskSample>& samples);

// Split I/O: <name>.jsonl records, <name>.f32 little-endian float32 blob,
// <name>.shape sidecar listing (id, kind, offset, rows, cols).
void WriteSplit(const std::filesystem::path& dir, const std::string& name, const std::vector<TaskSample>& samples);
std::vector<TaskSample> ReadSplit(const std::filesystem::path& dir, const std::string& name);

}  // namespace aflab::synthdata
