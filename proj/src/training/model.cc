#include "aflab/training/model.h"

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab::training {

namespace {

int MetaInt(const Checkpoint& c, const std::string& key) {
  const auto it = c.metadata.find(key);
  if (it == c.metadata.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

ParameterList SpeechLlm::AllParameters() {
  ParameterList out = encoder.Parameters();
  for (Parameter* p : adapter.Parameters()) out.push_back(p);
  for (Parameter* p : lm.Parameters()) out.push_back(p);
  return out;
}

void WriteModelMetadata(std::map<std::string, std::string>& m, const backbone::Tokenizer& tok,
                        const backbone::EncoderConfig* enc, const adapter::AdapterConfig* ad,
                        const backbone::LmConfig* lm) {
  m["tokenizer.symbols"] = tok.symbols();
  if (enc) {
    m["config.encoder.input_dim"] = std::to_string(enc->input_dim);
    m["config.encoder.subsample_factor"] = std::to_string(enc->subsample_factor);
    m["config.encoder.n_layers"] = std::to_string(enc->n_layers);
    m["config.encoder.d_enc"] = std::to_string(enc->d_enc);
    m["config.encoder.n_heads"] = std::to_string(enc->n_heads);
    m["config.encoder.ffn_dim"] = std::to_string(enc->ffn_dim);
    m["config.encoder.ctc_vocab"] = std::to_string(enc->ctc_vocab);
  }
  if (ad) {
    m["config.adapter.encoder_dim"] = std::to_string(ad->encoder_dim);
    m["config.adapter.llm_dim"] = std::to_string(ad->llm_dim);
    m["config.adapter.n_blocks"] = std::to_string(ad->n_blocks);
    m["config.adapter.n_heads"] = std::to_string(ad->n_heads);
    m["config.adapter.ffn_dim"] = std::to_string(ad->ffn_dim);
    m["config.adapter.mode"] = adapter::ToString(ad->mode);
    m["config.adapter.window"] = std::to_string(ad->window);
    m["config.adapter.mlp_hidden"] = std::to_string(ad->mlp_hidden);
    m["config.adapter.window_positions"] = ad->window_positions ? "1" : "0";
  }
  if (lm) {
    m["config.lm.vocab_size"] = std::to_string(lm->vocab_size);
    m["config.lm.d_model"] = std::to_string(lm->d_model);
    m["config.lm.n_layers"] = std::to_string(lm->n_layers);
    m["config.lm.n_heads"] = std::to_string(lm->n_heads);
    m["config.lm.ffn_dim"] = std::to_string(lm->ffn_dim);
    m["config.lm.context_length"] = std::to_string(lm->context_length);
  }
}

backbone::Tokenizer ReadTokenizer(const Checkpoint& c) {
  const auto it = c.metadata.find("tokenizer.symbols");
  if (it == c.metadata.end()) throw FormatError("checkpoint metadata lacks the tokenizer symbol table");
  return backbone::Tokenizer(it->second);
}

backbone::EncoderConfig ReadEncoderConfig(const Checkpoint& c) {
  backbone::EncoderConfig e;
  e.input_dim = MetaInt(c, "config.encoder.input_dim");
  e.subsample_factor = MetaInt(c, "config.encoder.subsample_factor");
  e.n_layers = MetaInt(c, "config.encoder.n_layers");
  e.d_enc = MetaInt(c, "config.encoder.d_enc");
  e.n_heads = MetaInt(c, "config.encoder.n_heads");
  e.ffn_dim = MetaInt(c, "config.encoder.ffn_dim");
  e.ctc_vocab = MetaInt(c, "config.encoder.ctc_vocab");
  return e;
}

adapter::AdapterConfig ReadAdapterConfig(const Checkpoint& c) {
  adapter::AdapterConfig a;
  a.encoder_dim = MetaInt(c, "config.adapter.encoder_dim");
  a.llm_dim = MetaInt(c, "config.adapter.llm_dim");
  a.n_blocks = MetaInt(c, "config.adapter.n_blocks");
  a.n_heads = MetaInt(c, "config.adapter.n_heads");
  a.ffn_dim = MetaInt(c, "config.adapter.ffn_dim");
  a.mode = adapter::ParseAdapterMode(c.metadata.at("config.adapter.mode"));
  a.window = MetaInt(c, "config.adapter.window");
  a.mlp_hidden = MetaInt(c, "config.adapter.mlp_hidden");
  a.window_positions = MetaInt(c, "config.adapter.window_positions") != 0;
  return a;
}

backbone::LmConfig ReadLmConfig(const Checkpoint& c) {
  backbone::LmConfig l;
  l.vocab_size = MetaInt(c, "config.lm.vocab_size");
  l.d_model = MetaInt(c, "config.lm.d_model");
  l.n_layers = MetaInt(c, "config.lm.n_layers");
  l.n_heads = MetaInt(c, "config.lm.n_heads");
  l.ffn_dim = MetaInt(c, "config.lm.ffn_dim");
  l.context_length = MetaInt(c, "config.lm.context_length");
  l.frozen = true;
  return l;
}

backbone::LanguageModel LoadLm(const Checkpoint& ckpt) {
  Rng rng(0);
  backbone::LanguageModel lm(ReadLmConfig(ckpt), rng);
  ckpt.LoadInto(lm.Parameters());
  return lm;
}

backbone::SpeechEncoder LoadEncoder(const Checkpoint& ckpt) {
  Rng rng(0);
  backbone::SpeechEncoder enc(ReadEncoderConfig(ckpt), rng);
  ckpt.LoadInto(enc.Parameters());
  return enc;
}

Checkpoint SaveModel(SpeechLlm& model, std::map<std::string, std::string> extra) {
  Checkpoint c;
  c.metadata = std::move(extra);
  const backbone::EncoderConfig enc = model.encoder.config();
  const adapter::AdapterConfig ad = model.adapter.config();
  const backbone::LmConfig lm = model.lm.config();
  WriteModelMetadata(c.metadata, model.tokenizer, &enc, &ad, &lm);
  c.AddParameters(model.AllParameters());
  return c;
}

void LoadModel(const Checkpoint& ckpt, SpeechLlm& model) {
  Rng rng(0);
  model.tokenizer = ReadTokenizer(ckpt);
  model.encoder = backbone::SpeechEncoder(ReadEncoderConfig(ckpt), rng);
  model.adapter = adapter::Adapter(ReadAdapterConfig(ckpt), rng);
  model.lm = backbone::LanguageModel(ReadLmConfig(ckpt), rng);
  ckpt.LoadInto(model.AllParameters());
}

AudioEmbedding EmbedAudio(Graph& g, SpeechLlm& model, const Tensor& features, ctc::AlignmentMode mode,
                          const std::vector<int>* target) {
  AudioEmbedding out;
  out.enc = model.encoder.Forward(g, features);
  if (model.adapter.config().mode != adapter::AdapterMode::kAlignFormer) {
    out.embeddings = model.adapter.Forward(g, out.enc.enc, nullptr);
    return out;
  }
  // The path is a discrete choice: no gradient flows through it.
  const Tensor& logp = out.enc.ctc_logp.value();
  if (mode == ctc::AlignmentMode::kForced) {
    if (target == nullptr) throw InputError("forced alignment requires a target");
    if (ctc::MinFramesRequired(*target) <= logp.rows()) {
      out.path = ctc::ForcedAlign(logp, *target);
    } else {
      out.path = ctc::GreedyPath(logp);
      out.forced_fallback = true;
    }
  } else {
    out.path = ctc::GreedyPath(logp);
  }
  out.windows = windowing::PathToWindows(out.path);
  out.embeddings = model.adapter.Forward(g, out.enc.enc, &out.windows);
  return out;
}

backbone::PromptInputs BuildPromptInputs(SpeechLlm& model, const synthdata::TaskSample& s,
                                         backbone::Order order, Var audio, Var instruction_audio) {
  backbone::PromptInputs in;
  in.order = order;
  in.audio = audio;
  in.instruction_audio = instruction_audio;
  if (!instruction_audio.valid()) in.instruction = backbone::InstructionTokens(model.tokenizer, s.instruction, order);
  return in;
}

std::string Respond(SpeechLlm& model, const synthdata::TaskSample& s, backbone::Order order, bool spoken_instruction,
                    int max_tokens) {
  Graph g(false);
  const std::vector<int> target = model.tokenizer.Encode(s.content);
  Var audio = EmbedAudio(g, model, s.features, ctc::AlignmentMode::kGreedy, &target).embeddings;
  Var instr;
  if (spoken_instruction && s.instruction_features.rows() > 0) {
    const std::vector<int> itarget = model.tokenizer.Encode(s.instruction);
    instr = EmbedAudio(g, model, s.instruction_features, ctc::AlignmentMode::kGreedy, &itarget).embeddings;
  }
  const backbone::PromptInputs in = BuildPromptInputs(model, s, order, audio, instr);
  const backbone::PromptAssembly a = backbone::AssemblePrompt(g, model.lm, in, /*with_response=*/false);
  return model.tokenizer.Decode(backbone::Generate(model.lm, a.embeddings.value(), max_tokens));
}

backbone::PromptInputs TextPromptInputs(Graph& g, backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                                        const synthdata::TaskSample& s, backbone::Order order) {
  backbone::PromptInputs in;
  in.order = order;
  in.instruction = backbone::InstructionTokens(tok, s.instruction, order);
  const std::vector<int> content = tok.Encode(s.content);
  in.audio = lm.Embed(g, content);
  in.response = tok.Encode(s.reference);
  return in;
}

std::string RespondText(backbone::LanguageModel& lm, const backbone::Tokenizer& tok, const synthdata::TaskSample& s,
                        backbone::Order order, int max_tokens) {
  Graph g(false);
  const backbone::PromptInputs in = TextPromptInputs(g, lm, tok, s, order);
  const backbone::PromptAssembly a = backbone::AssemblePrompt(g, lm, in, /*with_response=*/false);
  return tok.Decode(backbone::Generate(lm, a.embeddings.value(), max_tokens));
}

}  // namespace aflab::training
