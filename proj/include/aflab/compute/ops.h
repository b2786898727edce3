#pragma once

#include <span>
#include <vector>

#include "aflab/compute/graph.h"

namespace aflab {

// Differentiable operations over Graph nodes. All reductions accumulate in
// double. Unless noted, shapes must agree exactly or DimensionError is thrown.

Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
// x (n x d) + bias (1 x d) broadcast over rows.
Var AddRowBias(Var x, Var bias);
Var Gelu(Var x);
Var Relu(Var x);

// Row-wise softmax, max-shifted.
Var SoftmaxRows(Var x);
Var LogSoftmaxRows(Var x);

inline constexpr double kLayerNormEpsilon = 1e-5;
// Per-row normalization followed by gain/bias (both 1 x d).
Var LayerNorm(Var x, Var gain, Var bias);

// Rows of `table` at `ids`.
Var GatherRows(Var table, std::span<const int> ids);
Var ConcatRows(const std::vector<Var>& parts);
// Rows [begin, end).
Var SliceRows(Var x, int begin, int end);
// Tiles a 1 x d row into m x d.
Var RepeatRow(Var row, int m);
// Row-major reinterpretation; rows*cols must match.
Var Reshape(Var x, int rows, int cols);

Var Sum(Var x);
Var Mean(Var x);

// Rotary position embedding applied independently to each head slice of x.
// Row r is rotated by angle (position_offset + r) * base^(-2i/head_dim).
Var Rope(Var x, int heads, int position_offset = 0);

// Multi-head scaled dot-product attention. q: n x d, k/v: s x d, d % heads == 0.
// `mask` (n x s), when given, restricts row i to columns where mask(i, j) is
// true; `causal` restricts to j <= i + (s - n). Masked weights are exactly zero;
// a row with no admissible column yields a zero output row.
Var MultiHeadAttention(Var q, Var k, Var v, int heads, const BoolMatrix* mask = nullptr, bool causal = false);

// Mean negative log-likelihood over rows with mask set. All-masked input gives
// loss 0 and zero gradient. Throws InputError on out-of-vocabulary targets.
Var CrossEntropy(Var logits, std::span<const int> targets, const std::vector<bool>& mask);

// Plain-value helpers used outside of graphs.
Tensor MatMulValues(const Tensor& a, const Tensor& b);
void LogSoftmaxRowsInPlace(Tensor& x);

}  // namespace aflab
