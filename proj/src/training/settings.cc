#include "aflab/training/settings.h"

#include <sstream>

#include "aflab/errors.h"

namespace aflab::training {

namespace {

std::string Num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string Bool(bool b) { return b ? "true" : "false"; }

// Binds each key to a field once; used both to read and to write configs.
template <typename Visitor>
void VisitFields(Settings& s, Visitor&& v) {
  v.U64("data.seed", s.data.seed);
  v.Int("data.n_pretrain", s.data.n_pretrain);
  v.Int("data.n_pretrain_heldout", s.data.n_pretrain_heldout);
  v.Int("data.n_asr_train", s.data.n_asr_train);
  v.Int("data.n_asr_heldout", s.data.n_asr_heldout);
  v.Int("data.n_zeroshot", s.data.n_zeroshot);
  v.Int("render.frames_lo", s.data.gen.render.frames_lo);
  v.Int("render.frames_hi", s.data.gen.render.frames_hi);
  v.Int("render.feature_dim", s.data.gen.render.feature_dim);
  v.Double("render.noise_std", s.data.gen.render.noise_std);
  v.Double("render.speaker_std", s.data.gen.speaker_std);

  v.Int("lm.d_model", s.lm.d_model);
  v.Int("lm.n_layers", s.lm.n_layers);
  v.Int("lm.n_heads", s.lm.n_heads);
  v.Int("lm.ffn_dim", s.lm.ffn_dim);
  v.Int("lm.context_length", s.lm.context_length);

  v.Int("encoder.subsample_factor", s.encoder.subsample_factor);
  v.Int("encoder.n_layers", s.encoder.n_layers);
  v.Int("encoder.d_enc", s.encoder.d_enc);
  v.Int("encoder.n_heads", s.encoder.n_heads);
  v.Int("encoder.ffn_dim", s.encoder.ffn_dim);

  v.Int("adapter.n_blocks", s.adapter.n_blocks);
  v.Int("adapter.n_heads", s.adapter.n_heads);
  v.Int("adapter.ffn_dim", s.adapter.ffn_dim);
  v.Int("adapter.window", s.adapter.window);
  v.Int("adapter.mlp_hidden", s.adapter.mlp_hidden);
  v.Bool("adapter.window_positions", s.adapter.window_positions);

  v.Int("lm_pretrain.steps", s.lm_pretrain.steps);
  v.Int("lm_pretrain.batch_size", s.lm_pretrain.batch_size);
  v.Double("lm_pretrain.peak_lr", s.lm_pretrain.peak_lr);
  v.Int("lm_pretrain.warmup_steps", s.lm_pretrain.warmup_steps);
  v.Double("lm_pretrain.grad_clip", s.lm_pretrain.grad_clip);
  v.Double("lm_pretrain.gate_threshold", s.lm_pretrain.gate_threshold);
  v.Double("lm_pretrain.content_first_fraction", s.lm_pretrain.content_first_fraction);
  v.U64("lm_pretrain.seed", s.lm_pretrain.seed);

  v.Int("encoder_pretrain.steps", s.encoder_pretrain.steps);
  v.Int("encoder_pretrain.batch_size", s.encoder_pretrain.batch_size);
  v.Double("encoder_pretrain.peak_lr", s.encoder_pretrain.peak_lr);
  v.Int("encoder_pretrain.warmup_steps", s.encoder_pretrain.warmup_steps);
  v.Double("encoder_pretrain.grad_clip", s.encoder_pretrain.grad_clip);
  v.U64("encoder_pretrain.seed", s.encoder_pretrain.seed);

  v.String("train.preset", s.train.preset);
  v.Order("train.order", s.train.order);
  v.Adapter("train.adapter", s.train.adapter);
  v.Policy("train.alignment_mode", s.train.alignment);
  v.Init("train.ctc_init", s.train.ctc_init);
  v.Int("train.total_steps", s.train.total_steps);
  v.Int("train.batch_size", s.train.batch_size);
  v.Double("train.lambda_ctc", s.train.lambda_ctc);
  v.Bool("train.ctc_task_mixing", s.train.ctc_task_mixing);
  v.Double("train.peak_lr", s.train.peak_lr);
  v.Int("train.warmup_steps", s.train.warmup_steps);
  v.Double("train.p_greedy_max", s.train.p_greedy_max);
  v.Double("train.grad_clip", s.train.grad_clip);
  v.Bool("train.train_encoder", s.train.train_encoder);
  v.U64("train.seed", s.train.seed);
  v.Int("train.log_every", s.train.log_every);
  v.Int("train.agreement_samples", s.train.agreement_samples);

  v.Int("eval.max_tokens", s.eval.max_tokens);
  v.Int("eval.n_zeroshot", s.eval.n_zeroshot);
  v.Int("eval.n_asr", s.eval.n_asr);
}

struct Reader {
  const KeyValueConfig& cfg;
  std::set<std::string> known;
  void U64(const std::string& k, std::uint64_t& f) { known.insert(k), f = cfg.GetU64(k, f); }
  void Int(const std::string& k, int& f) { known.insert(k), f = cfg.GetInt(k, f); }
  void Double(const std::string& k, double& f) { known.insert(k), f = cfg.GetDouble(k, f); }
  void Bool(const std::string& k, bool& f) { known.insert(k), f = cfg.GetBool(k, f); }
  void String(const std::string& k, std::string& f) { known.insert(k), f = cfg.GetString(k, f); }
  void Order(const std::string& k, std::optional<backbone::Order>& f) {
    known.insert(k);
    const std::string v = cfg.GetString(k, "");
    if (v == "preset") f.reset();
    else if (!v.empty()) f = backbone::ParseOrder(v);
  }
  void Adapter(const std::string& k, std::optional<adapter::AdapterMode>& f) {
    known.insert(k);
    const std::string v = cfg.GetString(k, "");
    if (v == "preset") f.reset();
    else if (!v.empty()) f = adapter::ParseAdapterMode(v);
  }
  void Policy(const std::string& k, AlignmentPolicy& f) {
    known.insert(k);
    if (cfg.Has(k)) f = ParseAlignmentPolicy(cfg.GetString(k, ""));
  }
  void Init(const std::string& k, CtcInit& f) {
    known.insert(k);
    if (!cfg.Has(k)) return;
    const std::string v = cfg.GetString(k, "");
    if (v == "pretrained") f = CtcInit::kPretrained;
    else if (v == "random") f = CtcInit::kRandom;
    else throw InputError("config key '" + k + "': expected pretrained or random, got '" + v + "'");
  }
};

struct Writer {
  KeyValueConfig& cfg;
  void U64(const std::string& k, std::uint64_t f) { cfg.Set(k, std::to_string(f)); }
  void Int(const std::string& k, int f) { cfg.Set(k, std::to_string(f)); }
  void Double(const std::string& k, double f) { cfg.Set(k, Num(f)); }
  void Bool(const std::string& k, bool f) { cfg.Set(k, training::Bool(f)); }
  void String(const std::string& k, const std::string& f) { cfg.Set(k, f); }
  void Order(const std::string& k, const std::optional<backbone::Order>& f) {
    cfg.Set(k, f ? backbone::ToString(*f) : "preset");
  }
  void Adapter(const std::string& k, const std::optional<adapter::AdapterMode>& f) {
    cfg.Set(k, f ? adapter::ToString(*f) : "preset");
  }
  void Policy(const std::string& k, AlignmentPolicy f) { cfg.Set(k, ToString(f)); }
  void Init(const std::string& k, CtcInit f) { cfg.Set(k, f == CtcInit::kPretrained ? "pretrained" : "random"); }
};

}  // namespace

Settings LoadSettings(const KeyValueConfig& cfg) {
  Settings s;
  Reader r{cfg, {}};
  VisitFields(s, r);
  cfg.RejectUnknown(r.known);
  if (s.train.lambda_ctc < 0) throw InputError("train.lambda_ctc must be >= 0");
  if (s.train.p_greedy_max < 0 || s.train.p_greedy_max > 1) throw InputError("train.p_greedy_max must be in [0, 1]");
  if (s.train.warmup_steps >= s.train.total_steps) throw InputError("train.warmup_steps must be < train.total_steps");
  if (s.lm_pretrain.warmup_steps >= s.lm_pretrain.steps) throw InputError("lm_pretrain.warmup_steps must be < steps");
  if (s.encoder_pretrain.warmup_steps >= s.encoder_pretrain.steps)
    throw InputError("encoder_pretrain.warmup_steps must be < steps");
  return s;
}

KeyValueConfig SettingsToConfig(const Settings& s) {
  KeyValueConfig cfg;
  Settings copy = s;
  Writer w{cfg};
  VisitFields(copy, w);
  return cfg;
}

const std::vector<ExperimentPreset>& Presets() {
  using adapter::AdapterMode;
  using backbone::Order;
  using synthdata::InstructionSource;
  static const std::vector<ExperimentPreset> kPresets = {
      {"E1", Order::kAudioFirst, InstructionSource::kText, AdapterMode::kMlp},
      {"E2", Order::kInstructionFirst, InstructionSource::kText, AdapterMode::kMlp},
      {"E3", Order::kInstructionFirst, InstructionSource::kRenderedAudio, AdapterMode::kMlp},
      {"E4", Order::kInstructionFirst, InstructionSource::kRenderedAudioX5, AdapterMode::kMlp},
      {"qformer_baseline", Order::kAudioFirst, InstructionSource::kText, AdapterMode::kFixedWindow},
      {"mlp_baseline", Order::kAudioFirst, InstructionSource::kText, AdapterMode::kMlp},
      {"alignformer", Order::kAudioFirst, InstructionSource::kText, AdapterMode::kAlignFormer},
  };
  return kPresets;
}

ExperimentPreset FindPreset(const std::string& id) {
  std::string valid;
  for (const ExperimentPreset& p : Presets()) {
    if (p.id == id) return p;
    valid += (valid.empty() ? "" : ", ") + p.id;
  }
  throw InputError("unknown preset '" + id + "' (valid presets: " + valid + ")");
}

ExperimentPreset ResolvePreset(const TrainSettings& train) {
  ExperimentPreset p = FindPreset(train.preset);
  if (train.order) p.order = *train.order;
  if (train.adapter) p.adapter = *train.adapter;
  return p;
}

std::string RunLabel(const ExperimentPreset& p) {
  return p.id + "/" + backbone::ToString(p.order) + "/" + adapter::ToString(p.adapter);
}

}  // namespace aflab::training
