#pragma once

#include "aflab/compute/layers.h"

namespace aflab::backbone {

struct EncoderConfig {
  int input_dim = 16;
  int subsample_factor = 4;
  int n_layers = 2;
  int d_enc = 64;
  int n_heads = 4;
  int ffn_dim = 128;
  int ctc_vocab = 0;
};

struct EncoderOutput {
  Var enc;       // T x d_enc
  Var ctc_logp;  // T x V, rows log-normalized
  int frames = 0;
};

// Strided frame stacking (kernel = stride = subsample_factor) followed by a
// projection, bidirectional transformer blocks and a CTC head.
class SpeechEncoder {
 public:
  SpeechEncoder() = default;
  SpeechEncoder(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }
  // Throws InputError when fewer than subsample_factor frames are given.
  EncoderOutput Forward(Graph& g, const Tensor& features);
  static int OutputFrames(int input_frames, int subsample_factor) { return input_frames / subsample_factor; }

  // encoder.* parameters.
  ParameterList EncoderParameters();
  // ctc_head.* parameters.
  ParameterList CtcHeadParameters();
  ParameterList Parameters();
  void ReinitializeCtcHead(Rng& rng);

 private:
  EncoderConfig cfg_;
  Linear subsample_;
  std::vector<TransformerBlock> blocks_;
  LayerNormLayer final_norm_;
  Linear ctc_head_;
};

}  // namespace aflab::backbone
