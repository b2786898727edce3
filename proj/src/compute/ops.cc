#include "aflab/compute/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "aflab/errors.h"
#include "eigen_map.h"

namespace aflab {

using detail::Map;

namespace {

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.SameShape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.ShapeString() + " vs " + b.ShapeString());
  }
}

void RequireSameGraph(Var a, Var b, const char* op) {
  if (&a.graph() != &b.graph()) throw InputError(std::string(op) + ": operands from different graphs");
}

// Accumulate `delta` into the gradient of `v` if it participates.
void Accumulate(Graph& g, Var v, const Tensor& delta) {
  if (v.requires_grad()) g.MutableGrad(v.id()).AddInPlace(delta);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor MatMulValues(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.ShapeString() + " x " + b.ShapeString());
  }
  Tensor out(a.rows(), b.cols());
  if (a.rows() > 0 && b.cols() > 0) Map(out).noalias() = Map(a) * Map(b);
  return out;
}

void LogSoftmaxRowsInPlace(Tensor& x) {
  for (int r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (double& v : row) v -= lse;
  }
}

Var MatMul(Var a, Var b) {
  RequireSameGraph(a, b, "MatMul");
  Tensor out = MatMulValues(a.value(), b.value());
  return a.graph().Record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    if (a.requires_grad()) {
      Map(g.MutableGrad(a.id())).noalias() += Map(dout) * Map(b.value()).transpose();
    }
    if (b.requires_grad()) {
      Map(g.MutableGrad(b.id())).noalias() += Map(a.value()).transpose() * Map(dout);
    }
  });
}

Var Add(Var a, Var b) {
  RequireSameGraph(a, b, "Add");
  RequireSameShape(a.value(), b.value(), "Add");
  Tensor out = a.value();
  out.AddInPlace(b.value());
  return a.graph().Record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Accumulate(g, a, dout);
    Accumulate(g, b, dout);
  });
}

Var Sub(Var a, Var b) {
  RequireSameGraph(a, b, "Sub");
  RequireSameShape(a.value(), b.value(), "Sub");
  Tensor out = a.value();
  Map(out) -= Map(b.value());
  return a.graph().Record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Accumulate(g, a, dout);
    if (b.requires_grad()) Map(g.MutableGrad(b.id())) -= Map(dout);
  });
}

Var Mul(Var a, Var b) {
  RequireSameGraph(a, b, "Mul");
  RequireSameShape(a.value(), b.value(), "Mul");
  Tensor out = a.value();
  Map(out).array() *= Map(b.value()).array();
  return a.graph().Record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    if (a.requires_grad()) Map(g.MutableGrad(a.id())).array() += Map(dout).array() * Map(b.value()).array();
    if (b.requires_grad()) Map(g.MutableGrad(b.id())).array() += Map(dout).array() * Map(a.value()).array();
  });
}

Var Scale(Var a, double s) {
  Tensor out = a.value();
  out.Scale(s);
  return a.graph().Record(std::move(out), {a}, [a, s](Graph& g, int self) {
    if (a.requires_grad()) Map(g.MutableGrad(a.id())) += s * Map(g.grad(self));
  });
}

Var AddRowBias(Var x, Var bias) {
  RequireSameGraph(x, bias, "AddRowBias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("AddRowBias: bias " + bv.ShapeString() + " for input " + xv.ShapeString());
  }
  Tensor out = xv;
  if (out.rows() > 0) Map(out).rowwise() += Map(bv).row(0);
  return x.graph().Record(std::move(out), {x, bias}, [x, bias](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Accumulate(g, x, dout);
    if (bias.requires_grad() && dout.rows() > 0) {
      Map(g.MutableGrad(bias.id())).row(0) += Map(dout).colwise().sum();
    }
  });
}

Var Gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv.at(i);
    out.at(i) = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v)));
  }
  return x.graph().Record(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    const Tensor& xv = x.value();
    Tensor& dx = g.MutableGrad(x.id());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv.at(i);
      const double t = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
      dx.at(i) += dout.at(i) * d;
    }
  });
}

Var Relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.graph().Record(std::move(out), {x}, [x](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    const Tensor& xv = x.value();
    Tensor& dx = g.MutableGrad(x.id());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv.at(i) > 0.0) dx.at(i) += dout.at(i);
    }
  });
}

Var SoftmaxRows(Var x) {
  Tensor out = x.value();
  LogSoftmaxRowsInPlace(out);
  for (double& v : out.data()) v = std::exp(v);
  auto y = std::make_shared<Tensor>(out);
  return x.graph().Record(std::move(out), {x}, [x, y](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Tensor& dx = g.MutableGrad(x.id());
    for (int r = 0; r < y->rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < y->cols(); ++c) dot += dout(r, c) * (*y)(r, c);
      for (int c = 0; c < y->cols(); ++c) dx(r, c) += (*y)(r, c) * (dout(r, c) - dot);
    }
  });
}

Var LogSoftmaxRows(Var x) {
  Tensor out = x.value();
  LogSoftmaxRowsInPlace(out);
  auto y = std::make_shared<Tensor>(out);
  return x.graph().Record(std::move(out), {x}, [x, y](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Tensor& dx = g.MutableGrad(x.id());
    for (int r = 0; r < y->rows(); ++r) {
      double total = 0.0;
      for (int c = 0; c < y->cols(); ++c) total += dout(r, c);
      for (int c = 0; c < y->cols(); ++c) dx(r, c) += dout(r, c) - std::exp((*y)(r, c)) * total;
    }
  });
}

Var LayerNorm(Var x, Var gain, Var bias) {
  RequireSameGraph(x, gain, "LayerNorm");
  RequireSameGraph(x, bias, "LayerNorm");
  const Tensor& xv = x.value();
  const int n = xv.rows();
  const int d = xv.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != d || bias.value().rows() != 1 ||
      bias.value().cols() != d) {
    throw DimensionError("LayerNorm: gain/bias must be 1x" + std::to_string(d));
  }
  auto xhat = std::make_shared<Tensor>(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(n, d);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (int r = 0; r < n; ++r) {
    double mean = 0.0;
    for (int c = 0; c < d; ++c) mean += xv(r, c);
    mean /= d;
    double var = 0.0;
    for (int c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[r] = is;
    for (int c = 0; c < d; ++c) {
      const double h = (xv(r, c) - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gv(0, c) + bv(0, c);
    }
  }
  return x.graph().Record(std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    const int n = dout.rows();
    const int d = dout.cols();
    const Tensor& gv = gain.value();
    if (gain.requires_grad()) {
      Tensor& dg = g.MutableGrad(gain.id());
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) dg(0, c) += dout(r, c) * (*xhat)(r, c);
    }
    if (bias.requires_grad()) {
      Tensor& db = g.MutableGrad(bias.id());
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) db(0, c) += dout(r, c);
    }
    if (x.requires_grad()) {
      Tensor& dx = g.MutableGrad(x.id());
      std::vector<double> dh(d);
      for (int r = 0; r < n; ++r) {
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (int c = 0; c < d; ++c) {
          dh[c] = dout(r, c) * gv(0, c);
          mean_dh += dh[c];
          mean_dh_h += dh[c] * (*xhat)(r, c);
        }
        mean_dh /= d;
        mean_dh_h /= d;
        for (int c = 0; c < d; ++c) {
          dx(r, c) += (*inv_std)[r] * (dh[c] - mean_dh - (*xhat)(r, c) * mean_dh_h);
        }
      }
    }
  });
}

Var GatherRows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  Tensor out(static_cast<int>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw InputError("GatherRows: id " + std::to_string(ids[i]) + " outside [0, " + std::to_string(tv.rows()) + ")");
    }
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.graph().Record(std::move(out), {table}, [table, idx = std::move(idx)](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Tensor& dt = g.MutableGrad(table.id());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = dout.row(static_cast<int>(i));
      auto dst = dt.row(idx[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("ConcatRows: no inputs");
  const int cols = parts.front().cols();
  int rows = 0;
  for (const Var& p : parts) {
    RequireSameGraph(parts.front(), p, "ConcatRows");
    if (p.cols() != cols) throw DimensionError("ConcatRows: column mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<int> offsets;
  int r0 = 0;
  for (const Var& p : parts) {
    offsets.push_back(r0);
    const Tensor& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(r0) * cols);
    r0 += v.rows();
  }
  return parts.front().graph().Record(std::move(out), parts, [parts, offsets](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!parts[i].requires_grad()) continue;
      Tensor& dp = g.MutableGrad(parts[i].id());
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(offsets[i]) * dout.cols();
      for (std::size_t j = 0; j < dp.size(); ++j) dp.at(j) += dout.at(base + j);
    }
  });
}

Var SliceRows(Var x, int begin, int end) {
  const Tensor& xv = x.value();
  if (begin < 0 || end < begin || end > xv.rows()) {
    throw DimensionError("SliceRows: [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " +
                         xv.ShapeString());
  }
  const int cols = xv.cols();
  std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin) * cols,
                           xv.data().begin() + static_cast<std::ptrdiff_t>(end) * cols);
  return x.graph().Record(Tensor(end - begin, cols, std::move(data)), {x}, [x, begin](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Tensor& dx = g.MutableGrad(x.id());
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(begin) * dout.cols();
    for (std::size_t j = 0; j < dout.size(); ++j) dx.at(base + j) += dout.at(j);
  });
}

Var RepeatRow(Var row, int m) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw DimensionError("RepeatRow: expected a single row, got " + rv.ShapeString());
  Tensor out(m, rv.cols());
  for (int r = 0; r < m; ++r) std::copy(rv.data().begin(), rv.data().end(), out.row(r).begin());
  return row.graph().Record(std::move(out), {row}, [row](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    if (dout.rows() > 0) Map(g.MutableGrad(row.id())).row(0) += Map(dout).colwise().sum();
  });
}

Var Reshape(Var x, int rows, int cols) {
  const Tensor& xv = x.value();
  if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != xv.size()) {
    throw DimensionError("Reshape: " + xv.ShapeString() + " to " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  std::vector<double> data(xv.data().begin(), xv.data().end());
  return x.graph().Record(Tensor(rows, cols, std::move(data)), {x}, [x](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    Tensor& dx = g.MutableGrad(x.id());
    for (std::size_t j = 0; j < dout.size(); ++j) dx.at(j) += dout.at(j);
  });
}

Var Sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph().Record(Tensor(1, 1, s), {x}, [x](Graph& g, int self) {
    const double d = g.grad(self)(0, 0);
    for (double& v : g.MutableGrad(x.id()).data()) v += d;
  });
}

Var Mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("Mean: empty tensor");
  return Scale(Sum(x), 1.0 / static_cast<double>(n));
}

namespace {

void RotateRows(Tensor& t, int heads, int position_offset, bool inverse) {
  const int d = t.cols();
  const int dh = d / heads;
  const int half = dh / 2;
  std::vector<double> freq(half);
  for (int i = 0; i < half; ++i) freq[i] = std::pow(10000.0, -2.0 * i / dh);
  for (int r = 0; r < t.rows(); ++r) {
    const double pos = static_cast<double>(position_offset + r);
    auto row = t.row(r);
    for (int h = 0; h < heads; ++h) {
      for (int i = 0; i < half; ++i) {
        const double angle = pos * freq[i];
        const double c = std::cos(angle);
        const double s = inverse ? -std::sin(angle) : std::sin(angle);
        double& x0 = row[h * dh + 2 * i];
        double& x1 = row[h * dh + 2 * i + 1];
        const double a = x0;
        const double b = x1;
        x0 = a * c - b * s;
        x1 = a * s + b * c;
      }
    }
  }
}

}  // namespace

Var Rope(Var x, int heads, int position_offset) {
  const Tensor& xv = x.value();
  if (heads <= 0 || xv.cols() % heads != 0 || (xv.cols() / heads) % 2 != 0) {
    throw DimensionError("Rope: width " + std::to_string(xv.cols()) + " incompatible with " + std::to_string(heads) +
                         " heads");
  }
  Tensor out = xv;
  RotateRows(out, heads, position_offset, false);
  return x.graph().Record(std::move(out), {x}, [x, heads, position_offset](Graph& g, int self) {
    Tensor d = g.grad(self);
    RotateRows(d, heads, position_offset, true);
    g.MutableGrad(x.id()).AddInPlace(d);
  });
}

Var MultiHeadAttention(Var q, Var k, Var v, int heads, const BoolMatrix* mask, bool causal) {
  RequireSameGraph(q, k, "MultiHeadAttention");
  RequireSameGraph(q, v, "MultiHeadAttention");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const int n = qv.rows();
  const int s = kv.rows();
  const int d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != s) {
    throw DimensionError("MultiHeadAttention: q " + qv.ShapeString() + ", k " + kv.ShapeString() + ", v " +
                         vv.ShapeString());
  }
  if (heads <= 0 || d % heads != 0) throw DimensionError("MultiHeadAttention: width not divisible by heads");
  if (mask != nullptr && (mask->rows() != n || mask->cols() != s)) {
    throw DimensionError("MultiHeadAttention: mask shape does not match scores");
  }
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Admissible columns are shared by all heads.
  BoolMatrix allowed(n, s, true);
  if (mask != nullptr || causal) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < s; ++j) {
        bool ok = mask == nullptr || (*mask)(i, j);
        if (causal && j > i + (s - n)) ok = false;
        allowed.Set(i, j, ok);
      }
  }

  auto probs = std::make_shared<std::vector<Tensor>>();
  probs->reserve(heads);
  Tensor out(n, d);
  auto qm = Map(qv);
  auto km = Map(kv);
  auto vm = Map(vv);
  auto om = Map(out);
  for (int h = 0; h < heads; ++h) {
    Tensor p(n, s);
    auto pm = Map(p);
    if (n > 0 && s > 0) pm.noalias() = scale * qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose();
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < s; ++j)
        if (allowed(i, j)) mx = std::max(mx, p(i, j));
      if (!std::isfinite(mx)) {
        for (int j = 0; j < s; ++j) p(i, j) = 0.0;
        continue;
      }
      double sum = 0.0;
      for (int j = 0; j < s; ++j) {
        const double e = allowed(i, j) ? std::exp(p(i, j) - mx) : 0.0;
        p(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < s; ++j) p(i, j) /= sum;
    }
    if (n > 0 && s > 0) om.middleCols(h * dh, dh).noalias() = pm * vm.middleCols(h * dh, dh);
    probs->push_back(std::move(p));
  }

  return q.graph().Record(std::move(out), {q, k, v}, [q, k, v, heads, dh, scale, probs](Graph& g, int self) {
    const Tensor& dout = g.grad(self);
    const int n = dout.rows();
    const int s = k.value().rows();
    if (n == 0 || s == 0) return;
    auto dom = Map(dout);
    auto qm = Map(q.value());
    auto km = Map(k.value());
    auto vm = Map(v.value());
    detail::RowMatrix dp(n, s);
    for (int h = 0; h < heads; ++h) {
      auto pm = Map((*probs)[h]);
      auto dOh = dom.middleCols(h * dh, dh);
      if (v.requires_grad()) Map(g.MutableGrad(v.id())).middleCols(h * dh, dh).noalias() += pm.transpose() * dOh;
      if (!q.requires_grad() && !k.requires_grad()) continue;
      dp.noalias() = dOh * vm.middleCols(h * dh, dh).transpose();
      // dS = P * (dP - rowsum(dP * P))
      for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < s; ++j) dot += dp(i, j) * pm(i, j);
        for (int j = 0; j < s; ++j) dp(i, j) = pm(i, j) * (dp(i, j) - dot) * scale;
      }
      if (q.requires_grad()) Map(g.MutableGrad(q.id())).middleCols(h * dh, dh).noalias() += dp * km.middleCols(h * dh, dh);
      if (k.requires_grad()) {
        Map(g.MutableGrad(k.id())).middleCols(h * dh, dh).noalias() += dp.transpose() * qm.middleCols(h * dh, dh);
      }
    }
  });
}

Var CrossEntropy(Var logits, std::span<const int> targets, const std::vector<bool>& mask) {
  const Tensor& lv = logits.value();
  const int n = lv.rows();
  const int vocab = lv.cols();
  if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n) {
    throw DimensionError("CrossEntropy: targets/mask length must equal logits rows (" + std::to_string(n) + ")");
  }
  int count = 0;
  for (int r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    if (targets[r] < 0 || targets[r] >= vocab) {
      throw InputError("CrossEntropy: target " + std::to_string(targets[r]) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    ++count;
  }
  auto logp = std::make_shared<Tensor>(lv);
  LogSoftmaxRowsInPlace(*logp);
  double total = 0.0;
  for (int r = 0; r < n; ++r)
    if (mask[r]) total -= (*logp)(r, targets[r]);
  const double loss = count > 0 ? total / count : 0.0;
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.graph().Record(Tensor(1, 1, loss), {logits}, [logits, logp, tg, mask, count](Graph& g, int self) {
    if (count == 0) return;
    const double d = g.grad(self)(0, 0) / count;
    Tensor& dl = g.MutableGrad(logits.id());
    for (int r = 0; r < dl.rows(); ++r) {
      if (!mask[r]) continue;
      for (int c = 0; c < dl.cols(); ++c) dl(r, c) += d * std::exp((*logp)(r, c));
      dl(r, tg[r]) -= d;
    }
  });
}

}  // namespace aflab
