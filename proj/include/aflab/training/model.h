#pragma once

#include <map>
#include <string>

#include "aflab/adapter/adapter.h"
#include "aflab/backbone/encoder.h"
#include "aflab/backbone/lm.h"
#include "aflab/compute/checkpoint.h"
#include "aflab/ctc/ctc.h"
#include "aflab/synthdata/synthdata.h"
#include "aflab/windowing/windowing.h"

namespace aflab::training {

// Speech encoder + CTC head, adapter and frozen LM.
struct SpeechLlm {
  backbone::Tokenizer tokenizer;
  backbone::SpeechEncoder encoder;
  adapter::Adapter adapter;
  backbone::LanguageModel lm;

  ParameterList EncoderAndHead() { return encoder.Parameters(); }
  ParameterList AdapterParameters() { return adapter.Parameters(); }
  ParameterList LmParameters() { return lm.Parameters(); }
  ParameterList AllParameters();
};

// Config and tokenizer metadata written alongside the tensors.
void WriteModelMetadata(std::map<std::string, std::string>& meta, const backbone::Tokenizer& tok,
                        const backbone::EncoderConfig* enc, const adapter::AdapterConfig* ad,
                        const backbone::LmConfig* lm);
backbone::Tokenizer ReadTokenizer(const Checkpoint& ckpt);
backbone::EncoderConfig ReadEncoderConfig(const Checkpoint& ckpt);
adapter::AdapterConfig ReadAdapterConfig(const Checkpoint& ckpt);
backbone::LmConfig ReadLmConfig(const Checkpoint& ckpt);

backbone::LanguageModel LoadLm(const Checkpoint& ckpt);
backbone::SpeechEncoder LoadEncoder(const Checkpoint& ckpt);

Checkpoint SaveModel(SpeechLlm& model, std::map<std::string, std::string> extra_metadata = {});
// Rebuilds all three components; throws FormatError on missing tensors.
void LoadModel(const Checkpoint& ckpt, SpeechLlm& model);

struct AudioEmbedding {
  Var embeddings;                // m x d_llm
  windowing::WindowSpec windows; // alignformer windows (empty otherwise)
  backbone::EncoderOutput enc;
  ctc::AlignmentPath path;       // set for alignformer
  bool forced_fallback = false;  // forced alignment was infeasible, greedy used
};

// Encoder -> (alignment ->) adapter. `target` is needed for forced alignment.
AudioEmbedding EmbedAudio(Graph& g, SpeechLlm& model, const Tensor& features, ctc::AlignmentMode mode,
                          const std::vector<int>* target);

// Prompt inputs for a sample under `order`. With `spoken_instruction`, the
// instruction is taken from the sample's rendered instruction audio.
backbone::PromptInputs BuildPromptInputs(SpeechLlm& model, const synthdata::TaskSample& s,
                                         backbone::Order order, Var audio, Var instruction_audio);

// Greedy response under inference-time greedy alignment.
std::string Respond(SpeechLlm& model, const synthdata::TaskSample& s, backbone::Order order, bool spoken_instruction,
                    int max_tokens);

// Text-only prompt inputs (content tokens in the audio slot).
backbone::PromptInputs TextPromptInputs(Graph& g, backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                                        const synthdata::TaskSample& s, backbone::Order order);
std::string RespondText(backbone::LanguageModel& lm, const backbone::Tokenizer& tok, const synthdata::TaskSample& s,
                        backbone::Order order, int max_tokens);

}  // namespace aflab::training
