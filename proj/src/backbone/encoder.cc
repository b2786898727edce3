#include "aflab/backbone/encoder.h"

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab::backbone {

SpeechEncoder::SpeechEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.subsample_factor < 1) throw InputError("encoder: subsample_factor must be >= 1");
  if (cfg.ctc_vocab < 2) throw InputError("encoder: ctc_vocab must be >= 2");
  subsample_ = Linear("encoder.subsample", cfg.input_dim * cfg.subsample_factor, cfg.d_enc, rng);
  for (int i = 0; i < cfg.n_layers; ++i)
    blocks_.emplace_back("encoder.block" + std::to_string(i), cfg.d_enc, cfg.n_heads, cfg.ffn_dim, rng);
  final_norm_ = LayerNormLayer("encoder.final_norm", cfg.d_enc);
  ctc_head_ = Linear("ctc_head.proj", cfg.d_enc, cfg.ctc_vocab, rng);
}

EncoderOutput SpeechEncoder::Forward(Graph& g, const Tensor& features) {
  if (features.cols() != cfg_.input_dim)
    throw DimensionError("encoder: expected " + std::to_string(cfg_.input_dim) + " feature columns, got " +
                         std::to_string(features.cols()));
  const int t = OutputFrames(features.rows(), cfg_.subsample_factor);
  if (t < 1)
    throw InputError("encoder: " + std::to_string(features.rows()) + " input frames is shorter than subsample factor " +
                     std::to_string(cfg_.subsample_factor));
  const int used = t * cfg_.subsample_factor * cfg_.input_dim;
  Tensor stacked(t, cfg_.subsample_factor * cfg_.input_dim,
                 std::vector<double>(features.data().begin(), features.data().begin() + used));
  Var x = subsample_.Forward(g, g.Constant(std::move(stacked)));
  for (TransformerBlock& b : blocks_) x = b.Forward(g, x, /*causal=*/false, /*rope=*/true);
  EncoderOutput out;
  out.enc = final_norm_.Forward(g, x);
  out.ctc_logp = LogSoftmaxRows(ctc_head_.Forward(g, out.enc));
  out.frames = t;
  return out;
}

ParameterList SpeechEncoder::EncoderParameters() {
  ParameterList out;
  subsample_.Collect(out);
  for (TransformerBlock& b : blocks_) b.Collect(out);
  final_norm_.Collect(out);
  return out;
}

ParameterList SpeechEncoder::CtcHeadParameters() {
  ParameterList out;
  ctc_head_.Collect(out);
  return out;
}

ParameterList SpeechEncoder::Parameters() {
  ParameterList out = EncoderParameters();
  ctc_head_.Collect(out);
  return out;
}

void SpeechEncoder::ReinitializeCtcHead(Rng& rng) {
  // Values are replaced in place so that outstanding Parameter pointers stay valid.
  Linear fresh("ctc_head.proj", cfg_.d_enc, cfg_.ctc_vocab, rng);
  ctc_head_.weight.value = fresh.weight.value;
  ctc_head_.bias.value = fresh.bias.value;
}

}  // namespace aflab::backbone
