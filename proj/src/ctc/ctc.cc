#include "aflab/ctc/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "aflab/compute/ops.h"
#include "aflab/errors.h"

namespace aflab::ctc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Blank-interleaved label sequence: b y1 b y2 ... yU b.
std::vector<TokenId> Extend(std::span<const TokenId> target) {
  std::vector<TokenId> ext(2 * target.size() + 1, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  return ext;
}

// Whether state s may be entered directly from s - 2.
bool CanSkip(const std::vector<TokenId>& ext, int s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; }

void ValidateShape(const Tensor& logp) {
  if (logp.rows() < 1) throw InputError("CTC: need at least one frame");
  if (logp.cols() < 2) throw InputError("CTC: vocabulary must include blank and one token");
}

}  // namespace

LogProbMatrix::LogProbMatrix(Tensor values, double tolerance) : values_(std::move(values)) {
  ValidateShape(values_);
  for (int t = 0; t < values_.rows(); ++t) {
    double mx = kNegInf;
    for (double v : values_.row(t)) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : values_.row(t)) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    if (!(std::abs(lse) <= tolerance)) {
      throw InputError("LogProbMatrix: frame " + std::to_string(t) + " is not normalized (logsumexp " +
                       std::to_string(lse) + ")");
    }
  }
}

LogProbMatrix LogProbMatrix::FromLogits(Tensor logits) {
  LogSoftmaxRowsInPlace(logits);
  return LogProbMatrix(std::move(logits));
}

std::string ToString(AlignmentMode mode) { return mode == AlignmentMode::kForced ? "forced" : "greedy"; }

AlignmentMode ParseAlignmentMode(const std::string& s) {
  if (s == "forced") return AlignmentMode::kForced;
  if (s == "greedy") return AlignmentMode::kGreedy;
  throw InputError("unknown alignment mode '" + s + "'");
}

int MinFramesRequired(std::span<const TokenId> target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

void ValidateTarget(std::span<const TokenId> target, int frames, int vocab) {
  for (TokenId id : target) {
    if (id <= kBlank || id >= vocab) {
      throw InputError("CTC target id " + std::to_string(id) + " outside [1, " + std::to_string(vocab) + ")");
    }
  }
  const int need = MinFramesRequired(target);
  if (frames < need) {
    throw AlignmentInfeasibleError("CTC target needs " + std::to_string(need) + " frames, only " +
                                   std::to_string(frames) + " available");
  }
}

TargetSequence Collapse(std::span<const TokenId> labels) {
  TargetSequence out;
  TokenId prev = -1;
  for (TokenId l : labels) {
    if (l != prev && l != kBlank) out.push_back(l);
    prev = l;
  }
  return out;
}

double PathLogProb(const Tensor& logp, std::span<const TokenId> labels) {
  if (static_cast<int>(labels.size()) != logp.rows()) throw DimensionError("PathLogProb: path length != frames");
  double total = 0.0;
  for (int t = 0; t < logp.rows(); ++t) total += logp(t, labels[t]);
  return total;
}

CtcLossResult CtcLossAndGrad(const Tensor& logp, std::span<const TokenId> target) {
  ValidateShape(logp);
  const int T = logp.rows();
  ValidateTarget(target, T, logp.cols());
  const std::vector<TokenId> ext = Extend(target);
  const int S = static_cast<int>(ext.size());

  Tensor alpha(T, S, kNegInf);
  alpha(0, 0) = logp(0, ext[0]);
  if (S > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = LogAdd(a, alpha(t - 1, s - 1));
      if (CanSkip(ext, s)) a = LogAdd(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + logp(t, ext[s]);
    }
  }

  Tensor beta(T, S, kNegInf);
  beta(T - 1, S - 1) = logp(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = logp(T - 1, ext[S - 2]);
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = LogAdd(b, beta(t + 1, s + 1));
      if (s + 2 < S && CanSkip(ext, s + 2)) b = LogAdd(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + logp(t, ext[s]);
    }
  }

  double log_total = alpha(T - 1, S - 1);
  if (S > 1) log_total = LogAdd(log_total, alpha(T - 1, S - 2));

  CtcLossResult result;
  result.loss = -log_total;
  result.grad = Tensor::ZerosLike(logp);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double occ = alpha(t, s) + beta(t, s) - logp(t, ext[s]);
      if (occ == kNegInf) continue;
      result.grad(t, ext[s]) -= std::exp(occ - log_total);
    }
  }
  return result;
}

double CtcLoss(const LogProbMatrix& logp, std::span<const TokenId> target) {
  return CtcLossAndGrad(logp.values(), target).loss;
}

Var CtcLoss(Var logp, std::span<const TokenId> target) {
  CtcLossResult r = CtcLossAndGrad(logp.value(), target);
  auto grad = std::make_shared<Tensor>(std::move(r.grad));
  return logp.graph().Record(Tensor(1, 1, r.loss), {logp}, [logp, grad](Graph& g, int self) {
    Tensor scaled = *grad;
    scaled.Scale(g.grad(self)(0, 0));
    g.MutableGrad(logp.id()).AddInPlace(scaled);
  });
}

AlignmentPath GreedyPath(const Tensor& logp) {
  ValidateShape(logp);
  AlignmentPath path;
  path.mode = AlignmentMode::kGreedy;
  path.labels.resize(logp.rows());
  for (int t = 0; t < logp.rows(); ++t) {
    int best = 0;
    for (int k = 1; k < logp.cols(); ++k)
      if (logp(t, k) > logp(t, best)) best = k;
    path.labels[t] = best;
  }
  return path;
}

AlignmentPath ForcedAlign(const Tensor& logp, std::span<const TokenId> target) {
  ValidateShape(logp);
  const int T = logp.rows();
  ValidateTarget(target, T, logp.cols());
  const std::vector<TokenId> ext = Extend(target);
  const int S = static_cast<int>(ext.size());

  // best(t, s): max log-prob of frames t..T-1 given state s at frame t.
  Tensor best(T, S, kNegInf);
  best(T - 1, S - 1) = logp(T - 1, ext[S - 1]);
  if (S > 1) best(T - 1, S - 2) = logp(T - 1, ext[S - 2]);
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = best(t + 1, s);
      if (s + 1 < S) b = std::max(b, best(t + 1, s + 1));
      if (s + 2 < S && CanSkip(ext, s + 2)) b = std::max(b, best(t + 1, s + 2));
      if (b != kNegInf) best(t, s) = b + logp(t, ext[s]);
    }
  }

  // Walk forward, advancing only when it is strictly better than staying.
  AlignmentPath path;
  path.mode = AlignmentMode::kForced;
  path.labels.resize(T);
  int state = (S > 1 && best(0, 1) > best(0, 0)) ? 1 : 0;
  path.labels[0] = ext[state];
  for (int t = 1; t < T; ++t) {
    int next = state;
    if (state + 1 < S && best(t, state + 1) > best(t, next)) next = state + 1;
    if (state + 2 < S && CanSkip(ext, state + 2) && best(t, state + 2) > best(t, next)) next = state + 2;
    state = next;
    path.labels[t] = ext[state];
  }
  return path;
}

GradCheckReport CtcGradCheck(const Tensor& logp, std::span<const TokenId> target, const GradCheckOptions& options) {
  ValidateShape(logp);
  if (logp.rows() > 8 || target.size() > 3) throw InputError("CtcGradCheck: instance too large (T <= 8, U <= 3)");
  ValidateTarget(target, logp.rows(), logp.cols());
  TargetSequence tg(target.begin(), target.end());
  return CheckInputGradients([&tg](Graph&, const std::vector<Var>& in) { return CtcLoss(in[0], tg); }, {logp},
                             options);
}

}  // namespace aflab::ctc
