#include "aflab/training/pipeline.h"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "aflab/errors.h"
#include "aflab/version.h"
#include "aflab/windowing/windowing.h"

namespace aflab::training {

namespace {

constexpr char kVersionKey[] = "aflab.version";
constexpr char kLmStepKey[] = "lm_pretrain.step";
constexpr char kTrainSeedKey[] = "run.train_seed";

std::uint64_t SplitSeed(std::uint64_t seed, std::uint64_t salt) { return Rng::Mix(seed ^ Rng::Mix(salt)); }

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<synthdata::TaskSample> ReadRequired(const fs::path& data, const std::string& split) {
  if (!fs::exists(data / (split + ".jsonl")))
    throw InputError("split '" + split + "' not found in " + data.string() + " (run `gen` first)");
  return synthdata::ReadSplit(data, split);
}

template <class T>
std::vector<T> Head(std::vector<T> v, int n) {
  if (n > 0 && static_cast<int>(v.size()) > n) v.resize(n);
  return v;
}

}  // namespace

void PrepareOutputDir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw InputError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw InputError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

std::string Timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void WriteManifest(const fs::path& dir, const CommandContext& ctx, std::uint64_t seed, const std::string& started,
                   const std::map<std::string, std::string>& extra) {
  KeyValueConfig m = SettingsToConfig(ctx.settings);
  m.Set("manifest.command", ctx.command);
  m.Set("manifest.config_path", ctx.config_path.empty() ? "<defaults>" : ctx.config_path);
  m.Set("manifest.seed", std::to_string(seed));
  m.Set("manifest.code_version", kCodeVersion);
  m.Set("manifest.started", started);
  m.Set("manifest.finished", Timestamp());
  m.Set("manifest.output_dir", fs::absolute(dir).lexically_normal().string());
  m.Set("manifest.threads", std::to_string(ctx.threads));
  for (const auto& [k, v] : extra) m.Set(k, v);
  WriteText(dir / kManifestFile, m.Dump());
}

void StampVersion(Checkpoint& ckpt) { ckpt.metadata[kVersionKey] = kCodeVersion; }

Checkpoint ReadVersionedCheckpoint(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("checkpoint " + path.string() + " not found");
  Checkpoint c = ReadCheckpoint(path);
  const auto it = c.metadata.find(kVersionKey);
  const std::string found = it == c.metadata.end() ? "<none>" : it->second;
  if (found != kCodeVersion)
    throw VersionError("checkpoint " + path.string() + " was written by version " + found +
                       ", this binary is version " + kCodeVersion);
  return c;
}

GenSummary GenerateData(const CommandContext& ctx, const fs::path& out) {
  const std::string started = Timestamp();
  const DataSettings& d = ctx.settings.data;
  PrepareOutputDir(out, ctx.force);
  GenSummary summary;
  auto emit = [&](const std::string& name, const std::vector<synthdata::TaskSample>& samples) {
    synthdata::WriteSplit(out, name, samples);
    summary.counts[name] = static_cast<int>(samples.size());
    if (ctx.progress) ctx.progress("wrote " + name + " (" + std::to_string(samples.size()) + " records)");
  };
  emit(kPretrainSplit, synthdata::GenPretrainCorpus(d.n_pretrain, SplitSeed(d.seed, 1)));
  emit(kPretrainHeldoutSplit, synthdata::GenPretrainCorpus(d.n_pretrain_heldout, SplitSeed(d.seed, 2)));
  emit(kAsrTrainSplit, synthdata::GenAlignmentCorpus(d.n_asr_train, backbone::Order::kAudioFirst,
                                                     synthdata::InstructionSource::kText, SplitSeed(d.seed, 3), d.gen));
  emit(kAsrHeldoutSplit, synthdata::GenAlignmentCorpus(d.n_asr_heldout, backbone::Order::kAudioFirst,
                                                       synthdata::InstructionSource::kText, SplitSeed(d.seed, 4), d.gen));
  emit(kZeroShotSplit, synthdata::GenZeroShotEval(d.n_zeroshot, SplitSeed(d.seed, 5), d.gen));
  std::map<std::string, std::string> extra;
  for (const auto& [name, n] : summary.counts) extra["split." + name + ".records"] = std::to_string(n);
  WriteManifest(out, ctx, d.seed, started, extra);
  return summary;
}

PretrainSummary PretrainModels(const CommandContext& ctx, const fs::path& data, const fs::path& out,
                               const fs::path& resume) {
  const std::string started = Timestamp();
  const Settings& st = ctx.settings;
  const auto corpus = ReadRequired(data, kPretrainSplit);
  const auto heldout = ReadRequired(data, kPretrainHeldoutSplit);
  const auto asr = ReadRequired(data, kAsrTrainSplit);
  const auto asr_heldout = ReadRequired(data, kAsrHeldoutSplit);
  std::optional<Checkpoint> resumed;
  if (!resume.empty()) resumed = ReadVersionedCheckpoint(resume);
  PrepareOutputDir(out, ctx.force);

  const backbone::Tokenizer tok;
  backbone::LmConfig lc = st.lm;
  lc.vocab_size = tok.vocab_size();
  Rng lm_rng(Rng::Mix(st.lm_pretrain.seed ^ 0x6c6dULL));
  backbone::LanguageModel lm(lc, lm_rng);
  int start_step = 0;
  if (resumed) {
    lm = LoadLm(*resumed);
    lc = lm.config();
    start_step = std::stoi(resumed->metadata.at(kLmStepKey));
  }
  PretrainSummary summary;
  summary.lm_steps_run = static_cast<int>(PretrainLm(lm, tok, corpus, st.lm_pretrain, start_step, ctx.progress).size());
  lm.SetFrozen(true);
  Checkpoint lm_ckpt;
  WriteModelMetadata(lm_ckpt.metadata, tok, nullptr, nullptr, &lc);
  lm_ckpt.metadata[kLmStepKey] = std::to_string(std::max(start_step, st.lm_pretrain.steps));
  StampVersion(lm_ckpt);
  lm_ckpt.AddParameters(lm.Parameters());
  WriteCheckpoint(out / "lm.aflab", lm_ckpt);

  summary.gate = EvaluateTextGate(lm, tok, heldout, st.lm_pretrain.gate_threshold);
  WriteText(out / "gate.txt", summary.gate.Format());
  if (ctx.progress) ctx.progress(summary.gate.Format());

  // Spoken instructions of every preset appear in encoder pretraining.
  std::vector<synthdata::TaskSample> enc_corpus = asr;
  const ExperimentPreset x5{"", backbone::Order::kInstructionFirst, synthdata::InstructionSource::kRenderedAudioX5,
                            adapter::AdapterMode::kMlp};
  enc_corpus = TemplateForPreset(std::move(enc_corpus), x5, SplitSeed(st.encoder_pretrain.seed, 6), st.data.gen);
  backbone::EncoderConfig ec = st.encoder;
  ec.ctc_vocab = tok.vocab_size();
  Rng enc_rng(Rng::Mix(st.encoder_pretrain.seed ^ 0x656e63ULL));
  backbone::SpeechEncoder encoder(ec, enc_rng);
  PretrainEncoder(encoder, tok, enc_corpus, st.encoder_pretrain, ctx.progress);
  summary.encoder_token_error = CtcTokenError(encoder, tok, asr_heldout);
  Checkpoint enc_ckpt;
  WriteModelMetadata(enc_ckpt.metadata, tok, &ec, nullptr, nullptr);
  StampVersion(enc_ckpt);
  enc_ckpt.AddParameters(encoder.Parameters());
  WriteCheckpoint(out / "encoder.aflab", enc_ckpt);

  std::ostringstream ter;
  ter << std::fixed << std::setprecision(4) << summary.encoder_token_error;
  WriteManifest(out, ctx, st.lm_pretrain.seed, started,
                {{"result.gate_exact_match", std::to_string(summary.gate.exact_match)},
                 {"result.gate_passed", summary.gate.passed ? "true" : "false"},
                 {"result.encoder_ctc_token_error", ter.str()},
                 {"result.lm_start_step", std::to_string(start_step)},
                 {"result.resumed_from", resume.empty() ? "<none>" : resume.string()}});
  return summary;
}

RunArtifacts TrainPreset(const CommandContext& ctx, const fs::path& data, const fs::path& pretrained,
                         const fs::path& out) {
  const std::string started = Timestamp();
  const Settings& st = ctx.settings;
  const ExperimentPreset preset = ResolvePreset(st.train);
  const Checkpoint lm_ckpt = ReadVersionedCheckpoint(pretrained / "lm.aflab");
  const Checkpoint enc_ckpt = ReadVersionedCheckpoint(pretrained / "encoder.aflab");
  const auto train = TemplateForPreset(ReadRequired(data, kAsrTrainSplit), preset, SplitSeed(st.data.seed, 7),
                                       st.data.gen);
  const auto heldout = ReadRequired(data, kAsrHeldoutSplit);
  PrepareOutputDir(out, ctx.force);
  SpeechLlm model = BuildRunModel(st, preset, lm_ckpt, enc_ckpt);
  RunArtifacts art = RunExperiment(model, preset, st.train, train, heldout, out, ctx.progress);
  // Stamp the version and train seed into the written checkpoint.
  Checkpoint c = ReadCheckpoint(out / "model.aflab");
  StampVersion(c);
  c.metadata[kTrainSeedKey] = std::to_string(st.train.seed);
  WriteCheckpoint(out / "model.aflab", c);
  if (art.lm_checksum_before != art.lm_checksum_after)
    throw TrainingError("lm.* parameters changed during training (frozen-LM contract violated)");
  WriteManifest(out, ctx, st.train.seed, started,
                {{"run.label", RunLabel(preset)},
                 {"result.lm_checksum", std::to_string(art.lm_checksum_after)},
                 {"result.greedy_m_agreement", std::to_string(art.alignment.m_agreement)}});
  return art;
}

ExperimentPreset PresetFromRun(const Checkpoint& ckpt) {
  auto get = [&](const std::string& key) {
    const auto it = ckpt.metadata.find(key);
    if (it == ckpt.metadata.end()) throw FormatError("checkpoint lacks run metadata '" + key + "'");
    return it->second;
  };
  return ExperimentPreset{get("run.preset"), backbone::ParseOrder(get("run.order")),
                          synthdata::ParseInstructionSource(get("run.instruction_source")),
                          adapter::ParseAdapterMode(get("run.adapter"))};
}

EvalSummary EvaluateRun(const CommandContext& ctx, const fs::path& run, const fs::path& data, const fs::path& out) {
  const std::string started = Timestamp();
  const Settings& st = ctx.settings;
  const Checkpoint ckpt = ReadVersionedCheckpoint(run / "model.aflab");
  const auto zeroshot = Head(ReadRequired(data, kZeroShotSplit), st.eval.n_zeroshot);
  const auto asr_raw = Head(ReadRequired(data, kAsrHeldoutSplit), st.eval.n_asr);
  PrepareOutputDir(out, ctx.force);
  SpeechLlm model;
  LoadModel(ckpt, model);
  model.lm.SetFrozen(true);
  EvalSummary summary;
  summary.preset = PresetFromRun(ckpt);
  const auto asr = TemplateForPreset(asr_raw, summary.preset, SplitSeed(st.data.seed, 8), st.data.gen);

  ifr::PresetResult& r = summary.result;
  r.preset = RunLabel(summary.preset);
  r.report = EvaluateZeroShot(model, zeroshot, st.eval.max_tokens, ctx.threads);
  r.asr_ter = EvaluateAsr(model, asr, summary.preset, st.eval.max_tokens, ctx.threads);
  r.asr_n = static_cast<int>(asr.size());
  const std::vector<ifr::TableRow> rows = ifr::TableRows({r});
  WriteText(out / "eval.csv", ifr::FormatCsv(rows));
  WriteText(out / "trace.jsonl", ifr::FormatTrace(r.report));
  std::string report = ifr::FormatText(rows);

  if (summary.preset.adapter == adapter::AdapterMode::kAlignFormer) {
    summary.cosine_trained = EvaluateCosine(model, asr, ctx.threads);
    const auto seed_it = ckpt.metadata.find(kTrainSeedKey);
    const std::uint64_t train_seed = seed_it == ckpt.metadata.end() ? 1 : std::stoull(seed_it->second);
    model.adapter = InitialAdapter(model.adapter.config(), train_seed);
    summary.cosine_untrained = EvaluateCosine(model, asr, ctx.threads);
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << "trained_mean " << summary.cosine_trained->mean << "\n"
       << "untrained_mean " << summary.cosine_untrained->mean << "\n"
       << "rows " << summary.cosine_trained->rows << "\n";
    WriteText(out / "cosine.txt", os.str());
    report += os.str();
  }
  WriteText(out / "report.txt", report);
  if (ctx.progress) ctx.progress(report);
  WriteManifest(out, ctx, st.data.seed, started,
                {{"eval.run", fs::absolute(run).lexically_normal().string()},
                 {"result.macro_ifr", std::to_string(r.report.macro_ifr)}});
  return summary;
}

int DumpAlignments(const CommandContext& ctx, const fs::path& run, const fs::path& data, const std::string& split,
                   ctc::AlignmentMode mode, std::ostream& out) {
  const Checkpoint ckpt = ReadVersionedCheckpoint(run / "model.aflab");
  const auto samples = ReadRequired(data, split);
  SpeechLlm model;
  LoadModel(ckpt, model);
  int lines = 0;
  for (const synthdata::TaskSample& s : samples) {
    if (!s.has_audio()) continue;
    Graph g(false);
    const backbone::EncoderOutput enc = model.encoder.Forward(g, s.features);
    const Tensor& logp = enc.ctc_logp.value();
    const std::vector<int> target = model.tokenizer.Encode(s.content);
    ctc::AlignmentPath path;
    if (mode == ctc::AlignmentMode::kForced && ctc::MinFramesRequired(target) <= logp.rows())
      path = ctc::ForcedAlign(logp, target);
    else
      path = ctc::GreedyPath(logp);
    const windowing::WindowSpec spec = windowing::PathToWindows(path);
    const std::string problem = windowing::CheckPartition(spec);
    if (!problem.empty()) throw std::runtime_error(s.id + ": invalid windows: " + problem);
    out << windowing::FormatWindowLine(s.id, spec) << '\n';
    ++lines;
  }
  (void)ctx;
  return lines;
}

std::vector<ifr::TableRow> BuildTables(const std::vector<fs::path>& runs, const fs::path& out) {
  std::vector<ifr::TableRow> rows;
  for (const fs::path& run : runs) {
    fs::path csv = run / "eval.csv";
    if (!fs::exists(csv)) csv = run / "eval" / "eval.csv";
    if (!fs::exists(csv)) throw InputError("no eval.csv under " + run.string() + " (run `eval` first)");
    for (ifr::TableRow& r : ifr::ParseCsv(ReadText(csv))) rows.push_back(std::move(r));
  }
  WriteText(out / "tables.csv", ifr::FormatCsv(rows));
  WriteText(out / "tables.txt", ifr::FormatText(rows));
  return rows;
}

}  // namespace aflab::training
