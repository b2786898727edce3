#pragma once

#include <string>
#include <vector>

#include "aflab/compute/layers.h"
#include "aflab/windowing/windowing.h"

namespace aflab::adapter {

enum class AdapterMode { kAlignFormer, kFixedWindow, kMlp };

std::string ToString(AdapterMode mode);
// Accepts alignformer, qformer (alias fixed_window) and mlp.
AdapterMode ParseAdapterMode(const std::string& s);

struct AdapterConfig {
  int encoder_dim = 64;
  int llm_dim = 64;
  int n_blocks = 2;
  int n_heads = 4;
  int ffn_dim = 128;
  AdapterMode mode = AdapterMode::kAlignFormer;
  int window = 4;               // fixed-window size
  int mlp_hidden = 128;
  bool window_positions = false;  // rotary positions inside each window
};

// Cross-attention block on the query stream:
// x + Attn(LN(x), enc | mask), then x + FFN(LN(x)).
struct QueryBlock {
  QueryBlock() = default;
  QueryBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng);
  LayerNormLayer norm1;
  AttentionLayer cross;
  LayerNormLayer norm2;
  FeedForward ffn;
  void Collect(ParameterList& out);
};

class Adapter {
 public:
  Adapter() = default;
  Adapter(const AdapterConfig& cfg, Rng& rng);

  const AdapterConfig& config() const { return cfg_; }

  // One row per window; mask rows select the frames each window may attend.
  // Zero windows give a 0 x llm_dim result.
  Var AlignFormerForward(Graph& g, Var enc, const BoolMatrix& mask);
  // Consecutive chunks of k frames, the last possibly shorter.
  Var FixedWindowForward(Graph& g, Var enc, int k);
  // Per-frame two-layer MLP.
  Var MlpForward(Graph& g, Var enc);

  // Dispatches on the configured mode. `windows` is required for alignformer.
  Var Forward(Graph& g, Var enc, const windowing::WindowSpec* windows);
  // Rows produced for `frames` encoder frames, or -1 when the count depends on windows.
  int OutputRows(int frames) const;

  ParameterList Parameters();

 private:
  Var QueryStack(Graph& g, Var enc, const BoolMatrix& mask, const std::vector<int>& window_starts);

  AdapterConfig cfg_;
  Parameter query_;
  std::vector<QueryBlock> blocks_;
  LayerNormLayer out_norm_;
  Linear proj_;
  Linear mlp_in_;
  Linear mlp_out_;
};

}  // namespace aflab::adapter
