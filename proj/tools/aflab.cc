// aflab: data generation, pretraining, adapter training, evaluation and tables.
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure, 3 gate failure.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "aflab/errors.h"
#include "aflab/training/pipeline.h"
#include "aflab/version.h"

namespace {

using namespace aflab;
using namespace aflab::training;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGate = 3;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  bool force = false;
  bool quiet = false;
  std::vector<std::string> overrides;
};

ProgressFn Progress(bool quiet) {
  if (quiet) return nullptr;
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%6.1fs] %s\n", s, msg.c_str());
  };
}

CommandContext MakeContext(const std::string& command, const GlobalFlags& flags) {
  KeyValueConfig cfg;
  if (!flags.config.empty()) cfg = KeyValueConfig::Load(flags.config);
  for (const std::string& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    cfg.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  CommandContext ctx;
  ctx.command = command;
  ctx.config_path = flags.config;
  ctx.settings = LoadSettings(cfg);
  if (flags.threads < 1) throw InputError("--threads must be >= 1");
  ctx.threads = flags.threads;
  ctx.force = flags.force;
  ctx.progress = Progress(flags.quiet);
  return ctx;
}

std::string RequireOut(const GlobalFlags& flags, const std::string& command) {
  if (flags.out.empty()) throw InputError(command + " requires --out");
  return flags.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aflab: speech-LLM adapter experiments on a synthetic benchmark"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  app.add_option("--config", flags.config, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "seed of the command (data, pretraining or training)");
  app.add_option("--out", flags.out, "output directory (dump-align: output file)");
  app.add_option("--threads", flags.threads, "worker threads for evaluation")->capture_default_str();
  app.add_flag("--force", flags.force, "overwrite a non-empty output directory");
  app.add_flag("--quiet", flags.quiet, "suppress progress messages");
  app.add_option("--set", flags.overrides, "config override key=value (repeatable)");
  app.set_version_flag("--version", std::string("aflab ") + kCodeVersion);

  auto* gen = app.add_subcommand("gen", "generate pretrain, alignment and zero-shot splits");

  auto* pretrain = app.add_subcommand("pretrain", "pretrain the toy LM and the speech encoder; report the LM gate");
  std::string data_dir, resume;
  pretrain->add_option("--data", data_dir, "dataset directory")->required();
  pretrain->add_option("--resume", resume, "lm.aflab to continue from");

  auto* train = app.add_subcommand("train", "train an adapter preset against the frozen LM");
  std::string preset, pretrained;
  train->add_option("--preset", preset, "experiment preset id")->required();
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--pretrained", pretrained, "directory with lm.aflab and encoder.aflab")->required();

  auto* eval = app.add_subcommand("eval", "zero-shot IFR and ASR token error of a trained run");
  std::string run_dir;
  eval->add_option("--run", run_dir, "run directory")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();

  auto* dump = app.add_subcommand("dump-align", "write alignment windows of a split, one line per utterance");
  std::string split = kAsrHeldoutSplit, mode = "greedy";
  dump->add_option("--run", run_dir, "run directory")->required();
  dump->add_option("--data", data_dir, "dataset directory")->required();
  dump->add_option("--split", split, "split name")->capture_default_str();
  dump->add_option("--mode", mode, "greedy or forced")->check(CLI::IsMember({"greedy", "forced"}))->capture_default_str();

  auto* tables = app.add_subcommand("tables", "collect eval.csv files of runs into one table");
  std::vector<std::string> runs;
  tables->add_option("runs", runs, "run or eval directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      CommandContext ctx = MakeContext("gen", flags);
      if (flags.seed) ctx.settings.data.seed = *flags.seed;
      const GenSummary s = GenerateData(ctx, RequireOut(flags, "gen"));
      for (const auto& [name, n] : s.counts) std::cout << name << " " << n << "\n";
    } else if (pretrain->parsed()) {
      CommandContext ctx = MakeContext("pretrain", flags);
      if (flags.seed) ctx.settings.lm_pretrain.seed = ctx.settings.encoder_pretrain.seed = *flags.seed;
      const PretrainSummary s = PretrainModels(ctx, data_dir, RequireOut(flags, "pretrain"), resume);
      std::cout << s.gate.Format() << "encoder ctc token error " << s.encoder_token_error << "\n";
      if (!s.gate.passed) {
        std::cerr << "text-instruction gate failed; adapter training would not be meaningful\n";
        return kExitGate;
      }
    } else if (train->parsed()) {
      CommandContext ctx = MakeContext("train", flags);
      FindPreset(preset);
      ctx.settings.train.preset = preset;
      if (flags.seed) ctx.settings.train.seed = *flags.seed;
      const RunArtifacts art = TrainPreset(ctx, data_dir, pretrained, RequireOut(flags, "train"));
      std::cout << "greedy m agreement " << art.alignment.m_agreement << ", lm checksum " << art.lm_checksum_after
                << " (unchanged)\n";
    } else if (eval->parsed()) {
      CommandContext ctx = MakeContext("eval", flags);
      const std::filesystem::path out = flags.out.empty() ? std::filesystem::path(run_dir) / "eval" : std::filesystem::path(flags.out);
      const EvalSummary s = EvaluateRun(ctx, run_dir, data_dir, out);
      std::cout << ifr::FormatText(ifr::TableRows({s.result}));
    } else if (dump->parsed()) {
      CommandContext ctx = MakeContext("dump-align", flags);
      const ctc::AlignmentMode m = mode == "forced" ? ctc::AlignmentMode::kForced : ctc::AlignmentMode::kGreedy;
      if (flags.out.empty()) {
        DumpAlignments(ctx, run_dir, data_dir, split, m, std::cout);
      } else {
        if (std::filesystem::exists(flags.out) && !flags.force)
          throw InputError(flags.out + " exists (use --force to overwrite)");
        std::ofstream out(flags.out);
        if (!out) throw std::runtime_error("cannot write " + flags.out);
        DumpAlignments(ctx, run_dir, data_dir, split, m, out);
      }
    } else if (tables->parsed()) {
      CommandContext ctx = MakeContext("tables", flags);
      const std::string out = RequireOut(flags, "tables");
      const std::string started = Timestamp();
      PrepareOutputDir(out, ctx.force);
      std::vector<std::filesystem::path> paths(runs.begin(), runs.end());
      std::cout << ifr::FormatText(BuildTables(paths, out));
      WriteManifest(out, ctx, ctx.settings.data.seed, started, {{"tables.runs", std::to_string(runs.size())}});
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
