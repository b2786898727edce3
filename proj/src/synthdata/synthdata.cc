#include "aflab/synthdata/synthdata.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "aflab/compute/rng.h"
#include "aflab/errors.h"

namespace aflab::synthdata {

namespace {

using nlohmann::json;

constexpr int kAlphabetSize = 8;
// Index i of the source alphabet maps to kCipherAlphabet[kPermutation[i]].
constexpr int kPermutation[kAlphabetSize] = {4, 1, 7, 0, 6, 2, 5, 3};

constexpr std::uint64_t kPretrainSalt = 0x7072657472ULL;
constexpr std::uint64_t kAlignSalt = 0x616c69676eULL;
constexpr std::uint64_t kZeroShotSalt = 0x7a65726fULL;
constexpr std::uint64_t kTemplateSalt = 0x74706cULL;
constexpr std::uint64_t kPrototypeSalt = 0x70726f746fULL;

std::uint64_t HashString(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Rng SampleRng(std::uint64_t seed, std::uint64_t salt, int index) {
  return Rng(Rng::Mix(seed ^ Rng::Mix(salt + static_cast<std::uint64_t>(index))));
}

std::string RandomContent(Rng& rng) {
  const int len = rng.UniformInt(kMinContentLength, kMaxContentLength);
  std::string s;
  for (int i = 0; i < len; ++i) s.push_back(kSourceAlphabet[rng.UniformInt(0, kAlphabetSize - 1)]);
  return s;
}

std::string McInstruction(const std::string& question, const std::vector<std::string>& choices) {
  return question + " A: " + choices[0] + " B: " + choices[1] + " C: " + choices[2] +
         ". The answer format is '" + kAnswerPrefix + "'.";
}

// Places `correct` at position `key` and fills the rest from `pool`.
std::vector<std::string> MakeChoices(const std::string& correct, std::vector<std::string> pool, int key, Rng& rng) {
  pool.erase(std::remove(pool.begin(), pool.end(), correct), pool.end());
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) std::swap(pool[i], pool[rng.UniformInt(0, i)]);
  std::vector<std::string> choices(3);
  int next = 0;
  for (int i = 0; i < 3; ++i) choices[i] = i == key ? correct : pool[next++];
  return choices;
}

// Fills task-specific fields for a sample whose content is already set.
void BuildTask(TaskSample& s, Task task, int key, Rng& rng) {
  s.task = task;
  s.answer_format.reset();
  s.choices.clear();
  switch (task) {
    case Task::kTranscribe:
      s.instruction = kTranscribePrompt;
      s.reference = s.content;
      break;
    case Task::kRepeat:
      s.instruction = kRepeatPrompt;
      s.reference = s.content;
      break;
    case Task::kCipherTranslate:
      s.instruction = kCipherPrompt;
      s.reference = Cipher(s.content);
      break;
    case Task::kMcClassify: {
      // Fixed label set; the keyed group supplies the last letter.
      const std::string& group = kLetterGroups[key];
      s.content.back() = group[rng.UniformInt(0, static_cast<int>(group.size()) - 1)];
      s.choices.assign(std::begin(kLetterGroups), std::end(kLetterGroups));
      s.instruction = McInstruction("Which group holds the last letter?", s.choices);
      s.answer_format = kAnswerPrefix;
      s.reference = std::string(kAnswerPrefix) + static_cast<char>('A' + key);
      break;
    }
    case Task::kCountMc: {
      std::vector<std::string> pool;
      for (int n = 2; n <= 8; ++n) pool.push_back(std::to_string(n));
      s.choices = MakeChoices(std::to_string(s.content.size()), pool, key, rng);
      s.instruction = McInstruction("How many letters?", s.choices);
      s.answer_format = kAnswerPrefix;
      s.reference = std::string(kAnswerPrefix) + static_cast<char>('A' + key);
      break;
    }
  }
}

Tensor RenderText(const std::string& text, Rng& rng, const GenConfig& cfg) {
  static const backbone::Tokenizer tokenizer;
  RenderSpec spec = cfg.render;
  spec.speaker_offset = cfg.speaker_std * rng.Normal();
  spec.seed = rng.NextU64();
  return RenderSpeech(tokenizer.Encode(text), spec);
}

void WriteFloats(std::ofstream& out, const Tensor& t) {
  for (double v : t.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

Tensor ReadFloats(const std::string& blob, std::uint64_t offset, int rows, int cols, const std::string& where) {
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  if ((offset + count) * 4 > blob.size()) throw FormatError(where + ": feature reference past end of blob");
  Tensor t(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, blob.data() + (offset + i) * 4, sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    t.at(i) = f;
  }
  return t;
}

}  // namespace

std::string ToString(Task task) {
  switch (task) {
    case Task::kTranscribe: return "transcribe";
    case Task::kRepeat: return "repeat";
    case Task::kCipherTranslate: return "cipher_translate";
    case Task::kMcClassify: return "mc_classify";
    case Task::kCountMc: return "count_mc";
  }
  return "?";
}

Task ParseTask(const std::string& s) {
  for (Task t : {Task::kTranscribe, Task::kRepeat, Task::kCipherTranslate, Task::kMcClassify, Task::kCountMc})
    if (ToString(t) == s) return t;
  throw InputError("unknown task '" + s + "'");
}

std::string ToString(InstructionSource source) {
  switch (source) {
    case InstructionSource::kText: return "text";
    case InstructionSource::kRenderedAudio: return "rendered_audio";
    case InstructionSource::kRenderedAudioX5: return "rendered_audio_x5";
  }
  return "?";
}

InstructionSource ParseInstructionSource(const std::string& s) {
  for (auto v : {InstructionSource::kText, InstructionSource::kRenderedAudio, InstructionSource::kRenderedAudioX5})
    if (ToString(v) == s) return v;
  throw InputError("unknown instruction source '" + s + "' (expected text, rendered_audio or rendered_audio_x5)");
}

bool IsZeroShotTask(Task task) {
  return task == Task::kCipherTranslate || task == Task::kMcClassify || task == Task::kCountMc;
}

const std::vector<std::string>& AsrParaphrases() {
  static const std::vector<std::string> kParaphrases = {
      kRepeatPrompt,
      kTranscribePrompt,
      "Write down every word you hear.",
      "Say back exactly what was spoken.",
      "Copy the spoken words into text.",
  };
  return kParaphrases;
}

char CipherChar(char c) {
  const char* p = std::strchr(kSourceAlphabet, c);
  if (c == '\0' || p == nullptr) throw InputError(std::string("cipher: character outside source alphabet: '") + c + "'");
  return kCipherAlphabet[kPermutation[p - kSourceAlphabet]];
}

std::string Cipher(const std::string& text) {
  std::string out;
  for (char c : text) out.push_back(CipherChar(c));
  return out;
}

std::vector<double> Prototype(int token, int feature_dim) {
  Rng rng(Rng::Mix(kPrototypeSalt ^ Rng::Mix(static_cast<std::uint64_t>(token))));
  std::vector<double> v(feature_dim);
  for (double& x : v) x = rng.Normal();
  return v;
}

Tensor RenderSpeech(const std::vector<int>& tokens, const RenderSpec& spec) {
  if (tokens.empty()) throw InputError("render_speech: empty token sequence");
  if (spec.frames_lo < 1 || spec.frames_hi < spec.frames_lo)
    throw InputError("render_speech: invalid frames_per_token range");
  if (spec.noise_std < 0) throw InputError("render_speech: noise_std must be non-negative");
  Rng rng(spec.seed);
  std::vector<int> counts;
  int total = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    counts.push_back(rng.UniformInt(spec.frames_lo, spec.frames_hi));
    total += counts.back();
  }
  Tensor out(total, spec.feature_dim);
  int row = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::vector<double> proto = Prototype(tokens[i], spec.feature_dim);
    for (int f = 0; f < counts[i]; ++f, ++row)
      for (int d = 0; d < spec.feature_dim; ++d) {
        const double noise = spec.noise_std > 0 ? spec.noise_std * rng.Normal() : 0.0;
        out(row, d) = static_cast<float>(proto[d] + spec.speaker_offset + noise);
      }
  }
  return out;
}

std::vector<TaskSample> GenPretrainCorpus(int n, std::uint64_t seed) {
  if (n < 1) throw InputError("gen_pretrain_corpus: n must be >= 1");
  constexpr Task kTasks[] = {Task::kTranscribe, Task::kRepeat, Task::kCipherTranslate, Task::kMcClassify,
                             Task::kCountMc};
  std::vector<TaskSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = SampleRng(seed, kPretrainSalt, i);
    TaskSample s;
    s.id = "pretrain-" + std::to_string(i);
    s.order = Order::kInstructionFirst;
    s.content = RandomContent(rng);
    BuildTask(s, kTasks[i % 5], (i / 5) % 3, rng);
    out.push_back(std::move(s));
  }
  return out;
}

void ApplyAlignmentTemplate(TaskSample& s, Order order, InstructionSource source, std::uint64_t seed,
                            const GenConfig& cfg) {
  Rng rng(Rng::Mix(seed ^ Rng::Mix(kTemplateSalt ^ HashString(s.id))));
  s.order = order;
  s.source = source;
  s.instruction_features = Tensor();
  s.answer_format.reset();
  s.choices.clear();
  s.reference = s.content;
  switch (source) {
    case InstructionSource::kText:
      s.task = order == Order::kAudioFirst ? Task::kTranscribe : Task::kRepeat;
      s.instruction = order == Order::kAudioFirst ? kTranscribePrompt : kRepeatPrompt;
      return;
    case InstructionSource::kRenderedAudio:
      s.instruction = kRepeatPrompt;
      break;
    case InstructionSource::kRenderedAudioX5: {
      const auto& options = AsrParaphrases();
      s.instruction = options[rng.UniformInt(0, static_cast<int>(options.size()) - 1)];
      break;
    }
  }
  s.task = s.instruction == kTranscribePrompt ? Task::kTranscribe : Task::kRepeat;
  s.instruction_features = RenderText(s.instruction, rng, cfg);
}

std::vector<TaskSample> GenAlignmentCorpus(int n, Order order, InstructionSource source, std::uint64_t seed,
                                           const GenConfig& cfg) {
  if (n < 1) throw InputError("gen_alignment_corpus: n must be >= 1");
  std::vector<TaskSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = SampleRng(seed, kAlignSalt, i);
    TaskSample s;
    s.id = "asr-" + std::to_string(i);
    s.content = RandomContent(rng);
    s.features = RenderText(s.content, rng, cfg);
    ApplyAlignmentTemplate(s, order, source, seed, cfg);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TaskSample> GenZeroShotEval(int n, std::uint64_t seed, const GenConfig& cfg) {
  if (n < 1) throw InputError("gen_zeroshot_eval: n must be >= 1");
  constexpr Task kTasks[] = {Task::kCipherTranslate, Task::kMcClassify, Task::kCountMc};
  std::vector<TaskSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = SampleRng(seed, kZeroShotSalt, i);
    TaskSample s;
    s.id = "zeroshot-" + std::to_string(i);
    s.order = Order::kInstructionFirst;
    s.content = RandomContent(rng);
    BuildTask(s, kTasks[i % 3], (i / 3) % 3, rng);
    s.features = RenderText(s.content, rng, cfg);
    out.push_back(std::move(s));
  }
  VerifyReferences(out);
  return out;
}

std::string SolveTask(const TaskSample& s) {
  static const std::regex kChoices(R"(A: (\S+) B: (\S+) C: (\S+)\.)");
  switch (s.task) {
    case Task::kTranscribe:
    case Task::kRepeat:
      return s.content;
    case Task::kCipherTranslate: {
      // Table rebuilt from the alphabets rather than through CipherChar.
      const std::string src = kSourceAlphabet, dst = kCipherAlphabet;
      std::string out;
      for (char c : s.content) out.push_back(dst[kPermutation[src.find(c)]]);
      return out;
    }
    case Task::kMcClassify:
    case Task::kCountMc: {
      std::smatch m;
      if (!std::regex_search(s.instruction, m, kChoices)) throw InputError(s.id + ": choices not found in instruction");
      for (int k = 0; k < 3; ++k) {
        const std::string choice = m[k + 1].str();
        const bool hit = s.task == Task::kMcClassify ? choice.find(s.content.back()) != std::string::npos
                                                     : choice == std::to_string(s.content.size());
        if (hit) return std::string(kAnswerPrefix) + static_cast<char>('A' + k);
      }
      throw InputError(s.id + ": no choice matches the content");
    }
  }
  return {};
}

void VerifyReferences(const std::vector<TaskSample>& samples) {
  for (const TaskSample& s : samples) {
    const std::string expected = SolveTask(s);
    if (expected != s.reference)
      throw InputError(s.id + ": reference '" + s.reference + "' disagrees with evaluator '" + expected + "'");
  }
}

void WriteSplit(const std::filesystem::path& dir, const std::string& name, const std::vector<TaskSample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream records(dir / (name + ".jsonl"), std::ios::binary);
  std::ofstream blob(dir / (name + ".f32"), std::ios::binary);
  std::ofstream shape(dir / (name + ".shape"), std::ios::binary);
  if (!records || !blob || !shape) throw std::runtime_error("cannot write split '" + name + "' in " + dir.string());
  shape << "float32-le " << name << ".f32\n";
  std::uint64_t offset = 0;
  auto feature_ref = [&](const std::string& id, const char* kind, const Tensor& t) -> json {
    if (t.rows() == 0) return nullptr;
    json ref = {{"file", name + ".f32"}, {"offset", offset}, {"rows", t.rows()}, {"cols", t.cols()}};
    shape << id << ' ' << kind << ' ' << offset << ' ' << t.rows() << ' ' << t.cols() << '\n';
    WriteFloats(blob, t);
    offset += t.size();
    return ref;
  };
  for (const TaskSample& s : samples) {
    json r;
    r["id"] = s.id;
    r["task"] = ToString(s.task);
    r["order"] = backbone::ToString(s.order);
    r["instruction_source"] = ToString(s.source);
    r["content"] = s.content;
    r["instruction"] = s.instruction;
    r["reference"] = s.reference;
    r["answer_format"] = s.answer_format ? json(*s.answer_format) : json(nullptr);
    r["choices"] = s.choices.empty() ? json(nullptr) : json(s.choices);
    r["features"] = feature_ref(s.id, "content", s.features);
    r["instruction_features"] = feature_ref(s.id, "instruction", s.instruction_features);
    records << r.dump() << '\n';
  }
}

std::vector<TaskSample> ReadSplit(const std::filesystem::path& dir, const std::string& name) {
  const auto jsonl = dir / (name + ".jsonl");
  std::ifstream records(jsonl, std::ios::binary);
  if (!records) throw InputError("missing split '" + name + "' (expected " + jsonl.string() + ")");
  std::ifstream blob_in(dir / (name + ".f32"), std::ios::binary);
  std::ostringstream buf;
  buf << blob_in.rdbuf();
  const std::string blob = buf.str();

  std::vector<TaskSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(records, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = jsonl.string() + ":" + std::to_string(line_no);
    json r;
    try {
      r = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    TaskSample s;
    try {
      s.id = r.at("id").get<std::string>();
      s.task = ParseTask(r.at("task").get<std::string>());
      s.order = backbone::ParseOrder(r.at("order").get<std::string>());
      s.source = ParseInstructionSource(r.at("instruction_source").get<std::string>());
      s.content = r.at("content").get<std::string>();
      s.instruction = r.at("instruction").get<std::string>();
      s.reference = r.at("reference").get<std::string>();
      if (!r.at("answer_format").is_null()) s.answer_format = r.at("answer_format").get<std::string>();
      if (!r.at("choices").is_null()) s.choices = r.at("choices").get<std::vector<std::string>>();
      auto load = [&](const json& ref) -> Tensor {
        if (ref.is_null()) return Tensor();
        return ReadFloats(blob, ref.at("offset").get<std::uint64_t>(), ref.at("rows").get<int>(),
                          ref.at("cols").get<int>(), where);
      };
      s.features = load(r.at("features"));
      s.instruction_features = load(r.at("instruction_features"));
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace aflab::synthdata
