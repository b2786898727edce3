#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aflab/backbone/template.h"
#include "aflab/backbone/tokenizer.h"
#include "aflab/compute/layers.h"

namespace aflab::backbone {

struct LmConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int ffn_dim = 256;
  int context_length = 320;
  bool frozen = true;
};

// Keys (already rotated) and values of every processed position, per layer.
struct KvCache {
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  int length = 0;
};

// Decoder-only causal transformer with rotary positions.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const LmConfig& cfg, Rng& rng);

  const LmConfig& config() const { return cfg_; }
  int d_model() const { return cfg_.d_model; }

  Var Embed(Graph& g, std::span<const int> ids);
  // Final-normed hidden states for `x` (n x d). With a cache, `x` continues
  // the cached positions and the cache is extended.
  Var Hidden(Graph& g, Var x, KvCache* cache = nullptr);
  Var Logits(Graph& g, Var hidden);

  const Tensor& embedding_table() const { return embedding_.value; }
  ParameterList Parameters();
  void SetFrozen(bool frozen);

 private:
  LmConfig cfg_;
  Parameter embedding_;
  std::vector<TransformerBlock> blocks_;
  LayerNormLayer final_norm_;
  Linear head_;
};

// One user turn: instruction (text tokens or rendered audio embeddings) and
// the audio embeddings, ordered per `order`, followed by the response.
struct PromptInputs {
  Order order = Order::kInstructionFirst;
  Var audio;                         // m x d_llm; may have zero rows
  std::vector<int> instruction;      // text instruction tokens, separator included
  Var instruction_audio;             // replaces `instruction` when valid
  std::vector<int> response;         // without the end token
};

enum class Slot { kSpecial, kInstruction, kAudio, kResponse };

struct PromptAssembly {
  Order order = Order::kInstructionFirst;
  Var embeddings;                 // n x d_llm, LM input
  std::vector<Slot> layout;       // per input position
  std::vector<int> targets;       // next-token target, -1 where unused
  std::vector<bool> loss_mask;    // true where the target is a response token or <e>
  int prefix_length = 0;          // positions up to and including <r>
  int length() const { return static_cast<int>(layout.size()); }
};

// Instruction tokens with the separator space on the side facing the audio.
std::vector<int> InstructionTokens(const Tokenizer& tok, const std::string& text, Order order);

// <u> [instruction, audio or audio, instruction] <r> response..., targets
// shifted by one and closed by <e>. With `with_response` false, stops after
// <r> (generation prefix). Throws InputError beyond the context length.
PromptAssembly AssemblePrompt(Graph& g, LanguageModel& lm, const PromptInputs& in, bool with_response = true);

// Mean cross-entropy over response targets; nullopt when there are none.
std::optional<Var> NtpLoss(Graph& g, LanguageModel& lm, const PromptAssembly& assembly);

// Greedy decoding from a prefix assembly until <e> or max_tokens.
std::vector<int> Generate(LanguageModel& lm, const Tensor& prefix_embeddings, int max_tokens);

}  // namespace aflab::backbone
