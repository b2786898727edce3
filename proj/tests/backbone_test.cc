#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "aflab/backbone/encoder.h"
#include "aflab/backbone/lm.h"
#include "aflab/compute/grad_check.h"
#include "aflab/compute/ops.h"
#include "aflab/compute/optimizer.h"
#include "aflab/errors.h"

namespace aflab::backbone {
namespace {

const Tokenizer kTok;

LmConfig SmallLm() {
  LmConfig cfg;
  cfg.vocab_size = kTok.vocab_size();
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.ffn_dim = 32;
  cfg.context_length = 64;
  return cfg;
}

Tensor RandomTensor(int rows, int cols, Rng& rng, double std = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = std * rng.Normal();
  return t;
}

TEST(EncoderTest, FrameCountIsFloorDivision) {
  Rng rng(1);
  EncoderConfig cfg{.input_dim = 3, .subsample_factor = 4, .n_layers = 1, .d_enc = 8, .n_heads = 2, .ffn_dim = 16,
                    .ctc_vocab = 5};
  SpeechEncoder enc(cfg, rng);
  for (int frames : {4, 7, 16, 19}) {
    Graph g(false);
    const EncoderOutput out = enc.Forward(g, RandomTensor(frames, 3, rng));
    EXPECT_EQ(out.frames, frames / 4);
    EXPECT_EQ(out.enc.rows(), frames / 4);
    EXPECT_EQ(out.ctc_logp.rows(), frames / 4);
    EXPECT_EQ(out.ctc_logp.cols(), 5);
  }
  Graph g(false);
  EXPECT_THROW(enc.Forward(g, RandomTensor(3, 3, rng)), InputError);
  EXPECT_THROW(enc.Forward(g, RandomTensor(8, 2, rng)), DimensionError);
}

TEST(EncoderTest, CtcRowsAreLogNormalized) {
  Rng rng(2);
  EncoderConfig cfg{.input_dim = 4, .subsample_factor = 2, .n_layers = 2, .d_enc = 8, .n_heads = 2, .ffn_dim = 16,
                    .ctc_vocab = 6};
  SpeechEncoder enc(cfg, rng);
  Graph g(false);
  const Tensor logp = enc.Forward(g, RandomTensor(16, 4, rng, 3.0)).ctc_logp.value();
  ASSERT_EQ(logp.rows(), 8);
  for (int t = 0; t < logp.rows(); ++t) {
    double z = 0;
    for (double v : logp.row(t)) z += std::exp(v);
    EXPECT_NEAR(std::log(z), 0.0, 1e-6);
  }
}

TEST(EncoderTest, ReinitializedHeadKeepsParameterIdentity) {
  Rng rng(3);
  SpeechEncoder enc({.input_dim = 2, .subsample_factor = 1, .n_layers = 1, .d_enc = 4, .n_heads = 1, .ffn_dim = 8,
                     .ctc_vocab = 3},
                    rng);
  ParameterList head = enc.CtcHeadParameters();
  const Tensor before = head[0]->value;
  enc.ReinitializeCtcHead(rng);
  EXPECT_EQ(enc.CtcHeadParameters()[0], head[0]);
  EXPECT_FALSE(head[0]->value == before);
}

TEST(PromptTest, GoldenInstructionFirstLayout) {
  Rng rng(4);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.order = Order::kInstructionFirst;
  in.instruction = InstructionTokens(kTok, "Go.", Order::kInstructionFirst);
  in.audio = g.Constant(RandomTensor(2, 16, rng));
  in.response = kTok.Encode("ab");
  const PromptAssembly a = AssemblePrompt(g, lm, in);
  // <u> G o . ' ' A A <r> a b
  using S = Slot;
  const std::vector<Slot> layout = {S::kSpecial, S::kInstruction, S::kInstruction, S::kInstruction, S::kInstruction,
                                    S::kAudio,   S::kAudio,       S::kSpecial,     S::kResponse,    S::kResponse};
  EXPECT_EQ(a.layout, layout);
  EXPECT_EQ(a.prefix_length, 8);
  const std::vector<int> targets = {-1, -1, -1, -1, -1, -1, -1, kTok.Id('a'), kTok.Id('b'), Tokenizer::kEnd};
  EXPECT_EQ(a.targets, targets);
  const std::vector<bool> mask = {false, false, false, false, false, false, false, true, true, true};
  EXPECT_EQ(a.loss_mask, mask);
  const Tensor& e = a.embeddings.value();
  const Tensor& table = lm.embedding_table();
  const int expected_ids[] = {Tokenizer::kUser, kTok.Id('G'), kTok.Id('o'), kTok.Id('.'), kTok.Id(' ')};
  for (int p = 0; p < 5; ++p)
    for (int d = 0; d < 16; ++d) EXPECT_EQ(e(p, d), table(expected_ids[p], d));
  for (int d = 0; d < 16; ++d) {
    EXPECT_EQ(e(5, d), in.audio.value()(0, d));
    EXPECT_EQ(e(7, d), table(Tokenizer::kResponse, d));
    EXPECT_EQ(e(9, d), table(kTok.Id('b'), d));
  }
}

TEST(PromptTest, AudioFirstEmptyInstructionIsAudioThenResponse) {
  Rng rng(5);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.order = Order::kAudioFirst;
  in.instruction = InstructionTokens(kTok, "", Order::kAudioFirst);
  in.audio = g.Constant(RandomTensor(3, 16, rng));
  in.response = kTok.Encode("c");
  const PromptAssembly a = AssemblePrompt(g, lm, in);
  const std::vector<Slot> layout = {Slot::kSpecial, Slot::kAudio, Slot::kAudio, Slot::kAudio, Slot::kSpecial,
                                    Slot::kResponse};
  EXPECT_EQ(a.layout, layout);
  EXPECT_EQ(std::count(a.loss_mask.begin(), a.loss_mask.end(), true), 2);
}

TEST(PromptTest, SwappingOrderPermutesSegmentsOnly) {
  Rng rng(6);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.audio = g.Constant(RandomTensor(4, 16, rng));
  in.response = kTok.Encode("abc");
  in.order = Order::kInstructionFirst;
  in.instruction = kTok.Encode("Do it");
  const PromptAssembly a = AssemblePrompt(g, lm, in);
  in.order = Order::kAudioFirst;
  const PromptAssembly b = AssemblePrompt(g, lm, in);
  auto rows = [](const Tensor& t) {
    std::vector<std::vector<double>> r;
    for (int i = 0; i < t.rows(); ++i) r.emplace_back(t.row(i).begin(), t.row(i).end());
    std::sort(r.begin(), r.end());
    return r;
  };
  EXPECT_EQ(rows(a.embeddings.value()), rows(b.embeddings.value()));
  EXPECT_FALSE(a.embeddings.value() == b.embeddings.value());
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_EQ(a.loss_mask, b.loss_mask);
}

TEST(PromptTest, RenderedInstructionAudioReplacesTokens) {
  Rng rng(7);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.order = Order::kInstructionFirst;
  in.instruction = kTok.Encode("ignored ");
  in.instruction_audio = g.Constant(RandomTensor(5, 16, rng));
  in.audio = g.Constant(RandomTensor(2, 16, rng));
  const PromptAssembly a = AssemblePrompt(g, lm, in, /*with_response=*/false);
  EXPECT_EQ(a.length(), 1 + 5 + 2 + 1);
  EXPECT_EQ(std::count(a.layout.begin(), a.layout.end(), Slot::kInstruction), 5);
}

TEST(PromptTest, ContextOverflowIsInputError) {
  Rng rng(8);
  LmConfig cfg = SmallLm();
  cfg.context_length = 10;
  LanguageModel lm(cfg, rng);
  Graph g(false);
  PromptInputs in;
  in.instruction = kTok.Encode("a long instruction");
  EXPECT_THROW(AssemblePrompt(g, lm, in), InputError);
}

TEST(NtpTest, EmptyResponseIsSkipped) {
  Rng rng(9);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.instruction = kTok.Encode("x ");
  EXPECT_FALSE(NtpLoss(g, lm, AssemblePrompt(g, lm, in)).has_value());
  in.response = kTok.Encode("a");
  EXPECT_TRUE(NtpLoss(g, lm, AssemblePrompt(g, lm, in)).has_value());
  const PromptAssembly prefix = AssemblePrompt(g, lm, in, /*with_response=*/false);
  EXPECT_FALSE(NtpLoss(g, lm, prefix).has_value());
}

TEST(NtpTest, SingleTokenLossMatchesLogProbabilities) {
  Rng rng(10);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs in;
  in.instruction = kTok.Encode("say a ");
  in.response = kTok.Encode("a");
  const PromptAssembly a = AssemblePrompt(g, lm, in);
  const double loss = NtpLoss(g, lm, a)->scalar();
  Tensor logp = lm.Logits(g, lm.Hidden(g, a.embeddings)).value();
  LogSoftmaxRowsInPlace(logp);
  const int r = a.prefix_length - 1;
  EXPECT_NEAR(loss, -(logp(r, kTok.Id('a')) + logp(r + 1, Tokenizer::kEnd)) / 2, 1e-12);
}

TEST(NtpTest, GradientWrtAudioMatchesFiniteDifferences) {
  Rng rng(11);
  LanguageModel lm(SmallLm(), rng);
  const Tensor audio = RandomTensor(3, 16, rng);
  auto fn = [&](Graph& g, const std::vector<Var>& in) {
    PromptInputs p;
    p.order = Order::kAudioFirst;
    p.audio = in[0];
    p.instruction = kTok.Encode(" ok");
    p.response = kTok.Encode("ab");
    return *NtpLoss(g, lm, AssemblePrompt(g, lm, p));
  };
  const GradCheckReport r = CheckInputGradients(fn, {audio});
  EXPECT_TRUE(r.passed) << r.worst_entry << " rel " << r.max_relative_error;
}

TEST(NtpTest, FrozenLmUnchangedByOptimizerStep) {
  Rng rng(12);
  LanguageModel lm(SmallLm(), rng);
  ParameterList params = lm.Parameters();
  const std::uint64_t before = ChecksumParameters(params);
  Parameter audio("audio", RandomTensor(2, 16, rng));
  ParameterList all = params;
  all.push_back(&audio);
  AdamW opt(all);
  Graph g;
  PromptInputs p;
  p.audio = g.Param(audio);
  p.response = kTok.Encode("abc");
  g.Backward(*NtpLoss(g, lm, AssemblePrompt(g, lm, p)));
  const Tensor audio_before = audio.value;
  opt.Step(1e-2);
  EXPECT_EQ(ChecksumParameters(params), before);
  EXPECT_FALSE(audio.value == audio_before);
  for (Parameter* q : params) EXPECT_FALSE(q->trainable);
}

std::vector<int> NaiveGreedy(LanguageModel& lm, Tensor prefix, int max_tokens) {
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_tokens) {
    Graph g(false);
    const Tensor logits = lm.Logits(g, lm.Hidden(g, g.Constant(prefix))).value();
    const int last = logits.rows() - 1;
    int best = 0;
    for (int v = 1; v < logits.cols(); ++v)
      if (logits(last, v) > logits(last, best)) best = v;
    if (best == Tokenizer::kEnd) break;
    out.push_back(best);
    Tensor next(prefix.rows() + 1, prefix.cols());
    std::copy(prefix.data().begin(), prefix.data().end(), next.data().begin());
    for (int d = 0; d < prefix.cols(); ++d) next(prefix.rows(), d) = lm.embedding_table()(best, d);
    prefix = std::move(next);
  }
  return out;
}

TEST(GenerateTest, CachedDecodingMatchesFullRecomputation) {
  for (int seed = 0; seed < 4; ++seed) {
    Rng rng(100 + seed);
    LanguageModel lm(SmallLm(), rng);
    Graph g(false);
    PromptInputs p;
    p.instruction = kTok.Encode("Repeat ");
    p.audio = g.Constant(RandomTensor(3, 16, rng));
    const Tensor prefix = AssemblePrompt(g, lm, p, false).embeddings.value();
    EXPECT_EQ(Generate(lm, prefix, 12), NaiveGreedy(lm, prefix, 12)) << "seed " << seed;
  }
}

TEST(GenerateTest, CachedHiddenStatesMatchFullForward) {
  Rng rng(13);
  LanguageModel lm(SmallLm(), rng);
  const Tensor x = RandomTensor(7, 16, rng);
  Graph g(false);
  const Tensor full = lm.Hidden(g, g.Constant(x)).value();
  KvCache cache;
  Tensor head(4, 16, std::vector<double>(x.data().begin(), x.data().begin() + 64));
  Tensor tail(3, 16, std::vector<double>(x.data().begin() + 64, x.data().end()));
  lm.Hidden(g, g.Constant(head), &cache);
  const Tensor cont = lm.Hidden(g, g.Constant(tail), &cache).value();
  for (int r = 0; r < 3; ++r)
    for (int d = 0; d < 16; ++d) EXPECT_NEAR(cont(r, d), full(4 + r, d), 1e-10);
}

TEST(GenerateTest, ZeroBudgetAndDeterminism) {
  Rng rng(14);
  LanguageModel lm(SmallLm(), rng);
  Graph g(false);
  PromptInputs p;
  p.instruction = kTok.Encode("abc ");
  const Tensor prefix = AssemblePrompt(g, lm, p, false).embeddings.value();
  EXPECT_TRUE(Generate(lm, prefix, 0).empty());
  EXPECT_EQ(Generate(lm, prefix, 10), Generate(lm, prefix, 10));
}

}  // namespace
}  // namespace aflab::backbone
