#include "aflab/training/pretrain.h"

#include <iomanip>
#include <map>
#include <sstream>

#include "aflab/compute/ops.h"
#include "aflab/compute/optimizer.h"
#include "aflab/ctc/ctc.h"
#include "aflab/errors.h"
#include "aflab/ifr/ifr.h"
#include "aflab/training/model.h"
#include "aflab/training/schedule.h"

namespace aflab::training {

BatchSampler::BatchSampler(int n, std::uint64_t seed) : rng_(seed) {
  if (n < 1) throw InputError("batch sampler: empty dataset");
  for (int i = 0; i < n; ++i) order_.push_back(i);
  Shuffle();
}

void BatchSampler::Shuffle() {
  for (int i = static_cast<int>(order_.size()) - 1; i > 0; --i) std::swap(order_[i], order_[rng_.UniformInt(0, i)]);
  pos_ = 0;
}

int BatchSampler::Next() {
  if (pos_ == order_.size()) Shuffle();
  return order_[pos_++];
}

std::vector<double> PretrainLm(backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                               const std::vector<synthdata::TaskSample>& corpus, const LmPretrainSettings& st,
                               int start_step, const ProgressFn& progress) {
  const bool was_frozen = lm.config().frozen;
  lm.SetFrozen(false);
  ParameterList params = lm.Parameters();
  AdamW opt(params);
  BatchSampler sampler(static_cast<int>(corpus.size()), st.seed);
  Rng order_rng(Rng::Mix(st.seed ^ 0x6f72646572ULL));
  // Replays the sampler so a resumed run sees the same stream.
  for (long i = 0; i < static_cast<long>(start_step) * st.batch_size; ++i) {
    sampler.Next();
    order_rng.Uniform();
  }
  std::vector<double> losses;
  double window = 0.0;
  int window_n = 0;
  for (int step = start_step; step < st.steps; ++step) {
    ZeroGrads(params);
    double total = 0.0;
    for (int b = 0; b < st.batch_size; ++b) {
      const synthdata::TaskSample& s = corpus[sampler.Next()];
      const backbone::Order order = order_rng.Uniform() < st.content_first_fraction ? backbone::Order::kAudioFirst
                                                                                    : backbone::Order::kInstructionFirst;
      Graph g;
      const backbone::PromptAssembly a = backbone::AssemblePrompt(g, lm, TextPromptInputs(g, lm, tok, s, order));
      Var loss = *backbone::NtpLoss(g, lm, a);
      if (!std::isfinite(loss.scalar())) throw TrainingError("lm pretraining diverged at step " + std::to_string(step));
      total += loss.scalar();
      g.Backward(Scale(loss, 1.0 / st.batch_size));
    }
    ClipGradNorm(params, st.grad_clip);
    opt.Step(LrAt(step, st.warmup_steps, st.steps, st.peak_lr));
    losses.push_back(total / st.batch_size);
    window += losses.back();
    ++window_n;
    if (progress && ((step + 1) % 100 == 0 || step + 1 == st.steps)) {
      std::ostringstream os;
      os << "lm step " << step + 1 << "/" << st.steps << " loss " << std::fixed << std::setprecision(4)
         << window / window_n;
      progress(os.str());
      window = 0.0;
      window_n = 0;
    }
  }
  lm.SetFrozen(was_frozen);
  return losses;
}

std::string GateReport::Format() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "text instruction exact-match " << exact_match << " (" << exact << "/" << total << "), threshold " << threshold
     << ": " << (passed ? "PASS" : "FAIL") << "\n";
  for (const TaskCount& t : per_task)
    os << "  " << t.task << " " << static_cast<double>(t.exact) / t.total << " (" << t.exact << "/" << t.total
       << ")\n";
  return os.str();
}

GateReport EvaluateTextGate(backbone::LanguageModel& lm, const backbone::Tokenizer& tok,
                            const std::vector<synthdata::TaskSample>& heldout, double threshold) {
  GateReport r;
  r.threshold = threshold;
  std::map<std::string, GateReport::TaskCount> counts;
  for (const synthdata::TaskSample& s : heldout) {
    const int budget = static_cast<int>(s.reference.size()) + 4;
    const std::string response = RespondText(lm, tok, s, backbone::Order::kInstructionFirst, budget);
    auto& c = counts[synthdata::ToString(s.task)];
    c.task = synthdata::ToString(s.task);
    ++c.total;
    ++r.total;
    if (response == s.reference) {
      ++c.exact;
      ++r.exact;
    }
  }
  for (auto& [name, c] : counts) r.per_task.push_back(c);
  r.exact_match = r.total ? static_cast<double>(r.exact) / r.total : 0.0;
  r.passed = r.exact_match >= threshold;
  return r;
}

namespace {

struct Utterance {
  const Tensor* features;
  std::vector<int> target;
};

}  // namespace

std::vector<double> PretrainEncoder(backbone::SpeechEncoder& encoder, const backbone::Tokenizer& tok,
                                    const std::vector<synthdata::TaskSample>& samples,
                                    const EncoderPretrainSettings& st, const ProgressFn& progress) {
  std::vector<Utterance> utts;
  for (const synthdata::TaskSample& s : samples) {
    if (s.features.rows() > 0) utts.push_back({&s.features, tok.Encode(s.content)});
    if (s.instruction_features.rows() > 0) utts.push_back({&s.instruction_features, tok.Encode(s.instruction)});
  }
  ParameterList params = encoder.Parameters();
  SetTrainable(params, true);
  AdamW opt(params);
  BatchSampler sampler(static_cast<int>(utts.size()), st.seed);
  std::vector<double> losses;
  double window = 0.0;
  int window_n = 0;
  for (int step = 0; step < st.steps; ++step) {
    ZeroGrads(params);
    double total = 0.0;
    for (int b = 0; b < st.batch_size; ++b) {
      const Utterance& u = utts[sampler.Next()];
      Graph g;
      const backbone::EncoderOutput out = encoder.Forward(g, *u.features);
      // Per-token normalization keeps long instruction utterances from dominating.
      Var loss = Scale(ctc::CtcLoss(out.ctc_logp, u.target), 1.0 / u.target.size());
      if (!std::isfinite(loss.scalar()))
        throw TrainingError("encoder pretraining diverged at step " + std::to_string(step));
      total += loss.scalar();
      g.Backward(Scale(loss, 1.0 / st.batch_size));
    }
    ClipGradNorm(params, st.grad_clip);
    opt.Step(LrAt(step, st.warmup_steps, st.steps, st.peak_lr));
    losses.push_back(total / st.batch_size);
    window += losses.back();
    ++window_n;
    if (progress && ((step + 1) % 100 == 0 || step + 1 == st.steps)) {
      std::ostringstream os;
      os << "encoder step " << step + 1 << "/" << st.steps << " ctc/token " << std::fixed << std::setprecision(4)
         << window / window_n;
      progress(os.str());
      window = 0.0;
      window_n = 0;
    }
  }
  return losses;
}

double CtcTokenError(backbone::SpeechEncoder& encoder, const backbone::Tokenizer& tok,
                     const std::vector<synthdata::TaskSample>& samples) {
  double sum = 0.0;
  int n = 0;
  for (const synthdata::TaskSample& s : samples) {
    if (s.features.rows() == 0) continue;
    Graph g(false);
    const backbone::EncoderOutput out = encoder.Forward(g, s.features);
    const ctc::TargetSequence decoded = ctc::Collapse(ctc::GreedyPath(out.ctc_logp.value()).labels);
    sum += ifr::TokenErrorRate(tok.Decode(decoded), s.content);
    ++n;
  }
  return n ? sum / n : 0.0;
}

}  // namespace aflab::training
