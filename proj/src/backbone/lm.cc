#include "aflab/backbone/lm.h"

#include <cmath>

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab::backbone {

namespace {
constexpr double kEmbeddingStd = 1.0;
}

LanguageModel::LanguageModel(const LmConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.vocab_size < Tokenizer::kNumSpecial + 1) throw InputError("lm: vocab_size too small");
  Tensor table(cfg.vocab_size, cfg.d_model);
  for (double& v : table.data()) v = kEmbeddingStd * rng.Normal();
  embedding_ = Parameter("lm.embed", std::move(table));
  for (int i = 0; i < cfg.n_layers; ++i)
    blocks_.emplace_back("lm.block" + std::to_string(i), cfg.d_model, cfg.n_heads, cfg.ffn_dim, rng);
  final_norm_ = LayerNormLayer("lm.final_norm", cfg.d_model);
  head_ = Linear("lm.head", cfg.d_model, cfg.vocab_size, rng, /*with_bias=*/false);
  SetFrozen(cfg.frozen);
}

Var LanguageModel::Embed(Graph& g, std::span<const int> ids) { return GatherRows(g.Param(embedding_), ids); }

Var LanguageModel::Hidden(Graph& g, Var x, KvCache* cache) {
  const int offset = cache ? cache->length : 0;
  if (cache && cache->keys.empty()) {
    cache->keys.resize(blocks_.size());
    cache->values.resize(blocks_.size());
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    TransformerBlock& b = blocks_[l];
    AttentionLayer& attn = b.attention;
    Var h = b.norm1.Forward(g, x);
    Var q = Rope(attn.query.Forward(g, h), attn.heads, offset);
    Var k = Rope(attn.key.Forward(g, h), attn.heads, offset);
    Var v = attn.value.Forward(g, h);
    if (cache) {
      if (cache->length > 0) {
        k = ConcatRows({g.Constant(cache->keys[l]), k});
        v = ConcatRows({g.Constant(cache->values[l]), v});
      }
      cache->keys[l] = k.value();
      cache->values[l] = v.value();
    }
    x = Add(x, attn.output.Forward(g, MultiHeadAttention(q, k, v, attn.heads, nullptr, /*causal=*/true)));
    x = Add(x, b.ffn.Forward(g, b.norm2.Forward(g, x)));
  }
  if (cache) cache->length += x.rows();
  return final_norm_.Forward(g, x);
}

Var LanguageModel::Logits(Graph& g, Var hidden) { return head_.Forward(g, hidden); }

ParameterList LanguageModel::Parameters() {
  ParameterList out{&embedding_};
  for (TransformerBlock& b : blocks_) b.Collect(out);
  final_norm_.Collect(out);
  head_.Collect(out);
  return out;
}

void LanguageModel::SetFrozen(bool frozen) {
  cfg_.frozen = frozen;
  SetTrainable(Parameters(), !frozen);
}

std::vector<int> InstructionTokens(const Tokenizer& tok, const std::string& text, Order order) {
  if (text.empty()) return {};
  return tok.Encode(order == Order::kInstructionFirst ? text + " " : " " + text);
}

PromptAssembly AssemblePrompt(Graph& g, LanguageModel& lm, const PromptInputs& in, bool with_response) {
  PromptAssembly a;
  a.order = in.order;
  std::vector<Var> parts;
  auto add_tokens = [&](const std::vector<int>& ids, Slot slot) {
    if (ids.empty()) return;
    parts.push_back(lm.Embed(g, ids));
    a.layout.insert(a.layout.end(), ids.size(), slot);
  };
  auto add_audio = [&](Var audio, Slot slot) {
    if (!audio.valid() || audio.rows() == 0) return;
    if (audio.cols() != lm.d_model())
      throw DimensionError("assemble_prompt: audio width " + std::to_string(audio.cols()) + " != d_llm " +
                           std::to_string(lm.d_model()));
    parts.push_back(audio);
    a.layout.insert(a.layout.end(), audio.rows(), slot);
  };
  auto add_instruction = [&] {
    if (in.instruction_audio.valid())
      add_audio(in.instruction_audio, Slot::kInstruction);
    else
      add_tokens(in.instruction, Slot::kInstruction);
  };

  add_tokens({Tokenizer::kUser}, Slot::kSpecial);
  if (in.order == Order::kAudioFirst) {
    add_audio(in.audio, Slot::kAudio);
    add_instruction();
  } else {
    add_instruction();
    add_audio(in.audio, Slot::kAudio);
  }
  add_tokens({Tokenizer::kResponse}, Slot::kSpecial);
  a.prefix_length = a.length();
  if (with_response) add_tokens(in.response, Slot::kResponse);

  const int n = a.length();
  if (n + (with_response ? 0 : 1) > lm.config().context_length)
    throw InputError("assemble_prompt: sequence of " + std::to_string(n) + " positions exceeds context length " +
                     std::to_string(lm.config().context_length));
  a.targets.assign(n, -1);
  a.loss_mask.assign(n, false);
  if (with_response) {
    for (int i = 0; i < static_cast<int>(in.response.size()); ++i) a.targets[a.prefix_length - 1 + i] = in.response[i];
    a.targets[n - 1] = Tokenizer::kEnd;
    for (int p = a.prefix_length - 1; p < n; ++p) a.loss_mask[p] = true;
  }
  a.embeddings = ConcatRows(parts);
  return a;
}

std::optional<Var> NtpLoss(Graph& g, LanguageModel& lm, const PromptAssembly& a) {
  int first = -1;
  for (int p = 0; p < a.length(); ++p)
    if (a.loss_mask[p]) {
      first = p;
      break;
    }
  if (first < 0 || a.length() == a.prefix_length) return std::nullopt;
  // Positions past the last masked target cannot influence the loss under a
  // causal decoder, and rows before `first` need no logits.
  Var hidden = lm.Hidden(g, a.embeddings);
  Var logits = lm.Logits(g, SliceRows(hidden, first, a.length()));
  std::vector<int> targets(a.targets.begin() + first, a.targets.end());
  std::vector<bool> mask(a.loss_mask.begin() + first, a.loss_mask.end());
  for (int& t : targets)
    if (t < 0) t = 0;
  return CrossEntropy(logits, targets, mask);
}

std::vector<int> Generate(LanguageModel& lm, const Tensor& prefix, int max_tokens) {
  std::vector<int> out;
  if (max_tokens <= 0) return out;
  KvCache cache;
  Tensor last_logits;
  {
    Graph g(false);
    Var h = lm.Hidden(g, g.Constant(prefix), &cache);
    last_logits = lm.Logits(g, SliceRows(h, h.rows() - 1, h.rows())).value();
  }
  while (static_cast<int>(out.size()) < max_tokens) {
    int best = 0;
    for (int v = 1; v < last_logits.cols(); ++v)
      if (last_logits(0, v) > last_logits(0, best)) best = v;
    if (best == Tokenizer::kEnd) break;
    out.push_back(best);
    if (static_cast<int>(out.size()) == max_tokens || cache.length >= lm.config().context_length) break;
    Graph g(false);
    const int id = best;
    Var h = lm.Hidden(g, lm.Embed(g, std::span<const int>(&id, 1)), &cache);
    last_logits = lm.Logits(g, h).value();
  }
  return out;
}

}  // namespace aflab::backbone
