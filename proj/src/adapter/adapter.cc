#include "aflab/adapter/adapter.h"

#include <cmath>

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab::adapter {

std::string ToString(AdapterMode mode) {
  switch (mode) {
    case AdapterMode::kAlignFormer: return "alignformer";
    case AdapterMode::kFixedWindow: return "qformer";
    case AdapterMode::kMlp: return "mlp";
  }
  return "?";
}

AdapterMode ParseAdapterMode(const std::string& s) {
  if (s == "alignformer") return AdapterMode::kAlignFormer;
  if (s == "qformer" || s == "fixed_window") return AdapterMode::kFixedWindow;
  if (s == "mlp") return AdapterMode::kMlp;
  throw InputError("unknown adapter '" + s + "' (expected alignformer, qformer or mlp)");
}

QueryBlock::QueryBlock(const std::string& name, int dim, int heads, int ffn_dim, Rng& rng)
    : norm1(name + ".norm1", dim),
      cross(name + ".cross", dim, heads, rng),
      norm2(name + ".norm2", dim),
      ffn(name + ".ffn", dim, ffn_dim, rng) {}

void QueryBlock::Collect(ParameterList& out) {
  norm1.Collect(out);
  cross.Collect(out);
  norm2.Collect(out);
  ffn.Collect(out);
}

Adapter::Adapter(const AdapterConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.n_blocks < 1) throw InputError("adapter: n_blocks must be >= 1");
  if (cfg.window < 1) throw InputError("adapter: window must be >= 1");
  if (cfg.mode == AdapterMode::kMlp) {
    mlp_in_ = Linear("adapter.mlp.fc1", cfg.encoder_dim, cfg.mlp_hidden, rng);
    mlp_out_ = Linear("adapter.mlp.fc2", cfg.mlp_hidden, cfg.llm_dim, rng);
    return;
  }
  Tensor q(1, cfg.encoder_dim);
  for (double& v : q.data()) v = rng.Normal();
  query_ = Parameter("adapter.query", std::move(q));
  for (int i = 0; i < cfg.n_blocks; ++i)
    blocks_.emplace_back("adapter.block" + std::to_string(i), cfg.encoder_dim, cfg.n_heads, cfg.ffn_dim, rng);
  out_norm_ = LayerNormLayer("adapter.out_norm", cfg.encoder_dim);
  proj_ = Linear("adapter.proj", cfg.encoder_dim, cfg.llm_dim, rng);
}

Var Adapter::QueryStack(Graph& g, Var enc, const BoolMatrix& mask, const std::vector<int>& window_starts) {
  const int m = mask.rows();
  if (mask.cols() != enc.rows())
    throw DimensionError("adapter: mask has " + std::to_string(mask.cols()) + " columns for " +
                         std::to_string(enc.rows()) + " frames");
  if (m == 0) return g.Constant(Tensor(0, cfg_.llm_dim));
  if (!windowing::IsColumnPartition(mask)) throw InputError("adapter: mask rows do not partition the frames");
  if (cfg_.window_positions) {
    // Sinusoidal code of each frame's offset inside its own window.
    const int d = cfg_.encoder_dim;
    Tensor pe(enc.rows(), d);
    for (int i = 0; i < m; ++i)
      for (int t = 0; t < enc.rows(); ++t) {
        if (!mask(i, t)) continue;
        const int rel = t - window_starts[i];
        for (int j = 0; j < d; ++j) {
          const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / d);
          pe(t, j) = j % 2 == 0 ? std::sin(rel * freq) : std::cos(rel * freq);
        }
      }
    enc = Add(enc, g.Constant(std::move(pe)));
  }
  Var x = RepeatRow(g.Param(query_), m);
  for (QueryBlock& b : blocks_) {
    x = Add(x, b.cross.Forward(g, b.norm1.Forward(g, x), enc, &mask, /*causal=*/false, /*rope=*/false));
    x = Add(x, b.ffn.Forward(g, b.norm2.Forward(g, x)));
  }
  return proj_.Forward(g, out_norm_.Forward(g, x));
}

Var Adapter::AlignFormerForward(Graph& g, Var enc, const BoolMatrix& mask) {
  if (blocks_.empty()) throw InputError("adapter: alignformer forward on an mlp adapter");
  std::vector<int> starts(mask.rows(), 0);
  for (int i = 0; i < mask.rows(); ++i)
    for (int t = mask.cols() - 1; t >= 0; --t)
      if (mask(i, t)) starts[i] = t;
  return QueryStack(g, enc, mask, starts);
}

Var Adapter::FixedWindowForward(Graph& g, Var enc, int k) {
  if (blocks_.empty()) throw InputError("adapter: fixed-window forward on an mlp adapter");
  const windowing::WindowSpec spec = windowing::FixedWindows(enc.rows(), k);
  std::vector<int> starts;
  for (const auto& w : spec.windows) starts.push_back(w.start);
  return QueryStack(g, enc, windowing::WindowsToMask(spec), starts);
}

Var Adapter::MlpForward(Graph& g, Var enc) {
  if (blocks_.size() > 0 || mlp_in_.weight.value.empty()) throw InputError("adapter: mlp forward on a query adapter");
  return mlp_out_.Forward(g, Gelu(mlp_in_.Forward(g, enc)));
}

Var Adapter::Forward(Graph& g, Var enc, const windowing::WindowSpec* windows) {
  switch (cfg_.mode) {
    case AdapterMode::kAlignFormer:
      if (windows == nullptr) throw InputError("adapter: alignformer requires windows");
      return AlignFormerForward(g, enc, windowing::WindowsToMask(*windows));
    case AdapterMode::kFixedWindow:
      return FixedWindowForward(g, enc, cfg_.window);
    case AdapterMode::kMlp:
      return MlpForward(g, enc);
  }
  return {};
}

int Adapter::OutputRows(int frames) const {
  switch (cfg_.mode) {
    case AdapterMode::kAlignFormer: return -1;
    case AdapterMode::kFixedWindow: return (frames + cfg_.window - 1) / cfg_.window;
    case AdapterMode::kMlp: return frames;
  }
  return -1;
}

ParameterList Adapter::Parameters() {
  ParameterList out;
  if (cfg_.mode == AdapterMode::kMlp) {
    mlp_in_.Collect(out);
    mlp_out_.Collect(out);
    return out;
  }
  out.push_back(&query_);
  for (QueryBlock& b : blocks_) b.Collect(out);
  out_norm_.Collect(out);
  proj_.Collect(out);
  return out;
}

}  // namespace aflab::adapter
