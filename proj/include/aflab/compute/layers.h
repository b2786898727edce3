#pragma once

#include <string>
#include <vector>

#include "aflab/compute/graph.h"
#include "aflab/compute/rng.h"

namespace aflab {

using ParameterList = std::vector<Parameter*>;

struct Linear {
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool with_bias = true);

  Var Forward(Graph& g, Var x);
  void Collect(ParameterList& out);

  Parameter weight;  // in x out
  Parameter bias;    // 1 x out (empty when disabled)
  bool has_bias = true;
};

struct LayerNormLayer {
  LayerNormLayer() = default;
  LayerNormLayer(const std::string& name, int dim);

  Var Forward(Graph& g, Var x);
  void Collect(ParameterList& out);

  Parameter gain;
  Parameter bias;
};

struct FeedForward {
  FeedForward() = default;
  FeedForward(const std::string& name, int dim, int hidden, Rng& rng);

  Var Forward(Graph& g, Var x);
  void Collect(ParameterList& out);

  Linear up;
  Linear down;
};

struct AttentionLayer {
  AttentionLayer() = default;
  AttentionLayer(const std::string& name, int dim, int heads, Rng& rng);

  // Queries from `xq`, keys/values from `xkv`. With `rope`, queries and keys
  // are rotated by their absolute positions (q_offset / k_offset + row).
  Var Forward(Graph& g, Var xq, Var xkv, const BoolMatrix* mask, bool causal, bool rope, int q_offset = 0,
              int k_offset = 0);
  void Collect(ParameterList& out);

  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;
};

// Pre-norm self-attention block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng);

  Var Forward(Graph& g, Var x, bool causal, bool rope, int position_offset = 0);
  void Collect(ParameterList& out);

  LayerNormLayer norm1;
  AttentionLayer attention;
  LayerNormLayer norm2;
  FeedForward ffn;
};

void ZeroGrads(const ParameterList& params);
void SetTrainable(const ParameterList& params, bool trainable);
// Global L2 norm of trainable gradients; rescales them when above max_norm.
double ClipGradNorm(const ParameterList& params, double max_norm);
// Order-sensitive FNV-1a digest over names, shapes and raw value bytes.
std::uint64_t ChecksumParameters(const ParameterList& params);
std::size_t CountValues(const ParameterList& params);

}  // namespace aflab
