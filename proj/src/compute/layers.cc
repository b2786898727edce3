#include "aflab/compute/layers.h"

#include <cmath>
#include <cstring>

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab {

namespace {

Tensor RandomNormal(int rows, int cols, double std, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = std * rng.Normal();
  return t;
}

}  // namespace

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool with_bias)
    : weight(name + ".weight", RandomNormal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      has_bias(with_bias) {
  if (with_bias) bias = Parameter(name + ".bias", Tensor::Zeros(1, out));
}

Var Linear::Forward(Graph& g, Var x) {
  Var y = MatMul(x, g.Param(weight));
  return has_bias ? AddRowBias(y, g.Param(bias)) : y;
}

void Linear::Collect(ParameterList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

LayerNormLayer::LayerNormLayer(const std::string& name, int dim)
    : gain(name + ".gain", Tensor(1, dim, 1.0)), bias(name + ".bias", Tensor::Zeros(1, dim)) {}

Var LayerNormLayer::Forward(Graph& g, Var x) { return LayerNorm(x, g.Param(gain), g.Param(bias)); }

void LayerNormLayer::Collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

FeedForward::FeedForward(const std::string& name, int dim, int hidden, Rng& rng)
    : up(name + ".up", dim, hidden, rng), down(name + ".down", hidden, dim, rng) {}

Var FeedForward::Forward(Graph& g, Var x) { return down.Forward(g, Gelu(up.Forward(g, x))); }

void FeedForward::Collect(ParameterList& out) {
  up.Collect(out);
  down.Collect(out);
}

AttentionLayer::AttentionLayer(const std::string& name, int dim, int heads_in, Rng& rng)
    : query(name + ".query", dim, dim, rng),
      key(name + ".key", dim, dim, rng),
      value(name + ".value", dim, dim, rng),
      output(name + ".output", dim, dim, rng),
      heads(heads_in) {
  if (heads <= 0 || dim % heads != 0) throw InputError(name + ": dim must be divisible by heads");
}

Var AttentionLayer::Forward(Graph& g, Var xq, Var xkv, const BoolMatrix* mask, bool causal, bool rope, int q_offset,
                            int k_offset) {
  Var q = query.Forward(g, xq);
  Var k = key.Forward(g, xkv);
  Var v = value.Forward(g, xkv);
  if (rope) {
    q = Rope(q, heads, q_offset);
    k = Rope(k, heads, k_offset);
  }
  return output.Forward(g, MultiHeadAttention(q, k, v, heads, mask, causal));
}

void AttentionLayer::Collect(ParameterList& out) {
  query.Collect(out);
  key.Collect(out);
  value.Collect(out);
  output.Collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng)
    : norm1(name + ".norm1", dim),
      attention(name + ".attn", dim, heads, rng),
      norm2(name + ".norm2", dim),
      ffn(name + ".ffn", dim, ffn_dim, rng) {}

Var TransformerBlock::Forward(Graph& g, Var x, bool causal, bool rope, int position_offset) {
  Var h = norm1.Forward(g, x);
  x = Add(x, attention.Forward(g, h, h, nullptr, causal, rope, position_offset, position_offset));
  return Add(x, ffn.Forward(g, norm2.Forward(g, x)));
}

void TransformerBlock::Collect(ParameterList& out) {
  norm1.Collect(out);
  attention.Collect(out);
  norm2.Collect(out);
  ffn.Collect(out);
}

void ZeroGrads(const ParameterList& params) {
  for (Parameter* p : params) p->ZeroGrad();
}

void SetTrainable(const ParameterList& params, bool trainable) {
  for (Parameter* p : params) p->trainable = trainable;
}

double ClipGradNorm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    for (double v : p->grad.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      if (p->trainable) p->grad.Scale(s);
  }
  return norm;
}

std::uint64_t ChecksumParameters(const ParameterList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Parameter* p : params) {
    feed(p->name.data(), p->name.size());
    const int shape[2] = {p->value.rows(), p->value.cols()};
    feed(shape, sizeof(shape));
    feed(p->value.data().data(), p->value.size() * sizeof(double));
  }
  return h;
}

std::size_t CountValues(const ParameterList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace aflab
