#include "aflab/synthdata/synthdata.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <regex>
#include <set>

#include "aflab/errors.h"

namespace aflab::synthdata {
namespace {

const backbone::Tokenizer kTok;

TEST(TokenizerTest, RoundTripsPrintableText) {
  const std::string text = "Repeat exactly what the user says word by word. abc";
  EXPECT_EQ(kTok.Decode(kTok.Encode(text)), text);
  EXPECT_THROW(kTok.Encode("tab\there"), InputError);
  for (int id : kTok.Encode(text)) EXPECT_GE(id, backbone::Tokenizer::kNumSpecial);
}

TEST(TokenizerTest, DecodeDropsSpecials) {
  std::vector<int> ids = {backbone::Tokenizer::kUser, kTok.Id('a'), backbone::Tokenizer::kEnd};
  EXPECT_EQ(kTok.Decode(ids), "a");
}

TEST(RenderTest, NoiselessSingleFrameIsPrototypeSequence) {
  RenderSpec spec{.frames_lo = 1, .frames_hi = 1, .feature_dim = 5, .noise_std = 0.0, .speaker_offset = 0.0, .seed = 3};
  const std::vector<int> tokens = {7, 9, 7};
  const Tensor f = RenderSpeech(tokens, spec);
  ASSERT_EQ(f.rows(), 3);
  for (int r = 0; r < 3; ++r) {
    const auto proto = Prototype(tokens[r], 5);
    for (int d = 0; d < 5; ++d) EXPECT_EQ(f(r, d), static_cast<float>(proto[d]));
  }
}

TEST(RenderTest, DeterministicUnderSeed) {
  RenderSpec spec;
  spec.seed = 42;
  spec.speaker_offset = 0.3;
  const std::vector<int> tokens = kTok.Encode("abcdef");
  EXPECT_EQ(RenderSpeech(tokens, spec), RenderSpeech(tokens, spec));
  spec.seed = 43;
  const Tensor other = RenderSpeech(tokens, spec);
  spec.seed = 42;
  EXPECT_FALSE(other == RenderSpeech(tokens, spec));
}

TEST(RenderTest, SpeakerOffsetShiftsAllFeatures) {
  RenderSpec spec{.frames_lo = 2, .frames_hi = 2, .feature_dim = 4, .noise_std = 0.0, .speaker_offset = 0.0, .seed = 1};
  const Tensor a = RenderSpeech({5}, spec);
  spec.speaker_offset = 0.5;
  const Tensor b = RenderSpeech({5}, spec);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.at(i) - a.at(i), 0.5, 1e-6);
}

TEST(RenderTest, MeanFramesPerTokenIsRangeMidpoint) {
  RenderSpec spec;
  spec.frames_lo = 12;
  spec.frames_hi = 20;
  long frames = 0, tokens = 0;
  for (int i = 0; i < 400; ++i) {
    spec.seed = 1000 + i;
    const std::vector<int> t = kTok.Encode("abcde");
    frames += RenderSpeech(t, spec).rows();
    tokens += static_cast<long>(t.size());
  }
  // 2000 draws of a uniform over 9 values: sd of the mean is about 0.058.
  EXPECT_NEAR(static_cast<double>(frames) / tokens, 16.0, 0.25);
}

TEST(RenderTest, RejectsEmptyTokens) { EXPECT_THROW(RenderSpeech({}, RenderSpec{}), InputError); }

TEST(CipherTest, FixedPermutationIntoDisjointAlphabet) {
  const std::string src = kSourceAlphabet, dst = kCipherAlphabet;
  std::set<char> image;
  for (char c : src) image.insert(CipherChar(c));
  EXPECT_EQ(image, std::set<char>(dst.begin(), dst.end()));
  for (char c : src) EXPECT_EQ(dst.find(c), std::string::npos);
  EXPECT_THROW(CipherChar('z'), InputError);
}

TEST(PretrainCorpusTest, CipherSampleAppliesPermutation) {
  for (const TaskSample& s : GenPretrainCorpus(50, 1)) {
    if (s.task != Task::kCipherTranslate) continue;
    EXPECT_EQ(s.instruction, "Translate to cipher.");
    std::string expected;
    for (char c : s.content) expected.push_back(CipherChar(c));
    EXPECT_EQ(s.reference, expected);
  }
}

TEST(PretrainCorpusTest, BalancedTextOnlyInstructionFirst) {
  const auto corpus = GenPretrainCorpus(500, 7);
  std::map<Task, int> counts;
  const std::regex answer(R"(The answer is: [ABC])");
  for (const TaskSample& s : corpus) {
    ++counts[s.task];
    EXPECT_FALSE(s.has_audio());
    EXPECT_EQ(s.order, Order::kInstructionFirst);
    EXPECT_GE(static_cast<int>(s.content.size()), kMinContentLength);
    EXPECT_LE(static_cast<int>(s.content.size()), kMaxContentLength);
    if (s.task == Task::kMcClassify || s.task == Task::kCountMc) {
      EXPECT_TRUE(std::regex_match(s.reference, answer));
    }
    EXPECT_NO_THROW(kTok.Encode(s.instruction + " " + s.content + s.reference));
  }
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [task, n] : counts) EXPECT_EQ(n, 100) << ToString(task);
  VerifyReferences(corpus);
}

TEST(AlignmentCorpusTest, PromptsFollowOrderAndSource) {
  for (const TaskSample& s : GenAlignmentCorpus(20, Order::kAudioFirst, InstructionSource::kText, 3)) {
    EXPECT_EQ(s.instruction, "Transcribe the audio clip into text.");
    EXPECT_EQ(s.reference, s.content);
    EXPECT_TRUE(s.has_audio());
    EXPECT_EQ(s.instruction_features.rows(), 0);
  }
  for (const TaskSample& s : GenAlignmentCorpus(20, Order::kInstructionFirst, InstructionSource::kText, 3))
    EXPECT_EQ(s.instruction, "Repeat exactly what the user says word by word.");
  for (const TaskSample& s : GenAlignmentCorpus(5, Order::kInstructionFirst, InstructionSource::kRenderedAudio, 3)) {
    EXPECT_EQ(s.instruction, kRepeatPrompt);
    EXPECT_GE(s.instruction_features.rows(), static_cast<int>(s.instruction.size()) * 12);
  }
}

TEST(AlignmentCorpusTest, FiveParaphrasesDrawnUniformly) {
  const auto corpus = GenAlignmentCorpus(1000, Order::kInstructionFirst, InstructionSource::kRenderedAudioX5, 5,
                                         GenConfig{.render = {.frames_lo = 1, .frames_hi = 1}});
  std::map<std::string, int> counts;
  for (const TaskSample& s : corpus) ++counts[s.instruction];
  ASSERT_EQ(counts.size(), 5u);
  // Binomial(1000, 0.2): sd about 12.6.
  for (const auto& [text, n] : counts) EXPECT_NEAR(n, 200, 50) << text;
}

TEST(AlignmentCorpusTest, SharedContentAcrossTemplates) {
  const auto a = GenAlignmentCorpus(10, Order::kAudioFirst, InstructionSource::kText, 9);
  const auto b = GenAlignmentCorpus(10, Order::kInstructionFirst, InstructionSource::kText, 9);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(a[i].content, b[i].content);
    EXPECT_EQ(a[i].features, b[i].features);
  }
}

TEST(ZeroShotTest, AnswerKeyBalancedAndReferencesVerified) {
  const auto eval = GenZeroShotEval(300, 11);
  std::map<Task, std::map<char, int>> keys;
  for (const TaskSample& s : eval) {
    EXPECT_TRUE(IsZeroShotTask(s.task));
    EXPECT_TRUE(s.has_audio());
    if (s.answer_format) ++keys[s.task][s.reference.back()];
  }
  for (const auto& [task, per_key] : keys) {
    int total = 0;
    for (const auto& kv : per_key) total += kv.second;
    for (char k : {'A', 'B', 'C'}) EXPECT_NEAR(per_key.at(k) / static_cast<double>(total), 1.0 / 3, 0.05);
  }
  EXPECT_EQ(keys.size(), 2u);
}

TEST(ZeroShotTest, EvaluatorCatchesCorruptedReference) {
  auto eval = GenZeroShotEval(6, 2);
  eval[1].reference = "The answer is: A";
  if (SolveTask(eval[1]) == eval[1].reference) eval[1].reference = "The answer is: B";
  EXPECT_THROW(VerifyReferences(eval), InputError);
}

TEST(ZeroShotTest, TasksDisjointFromAlignmentTraining) {
  const auto eval = GenZeroShotEval(30, 4);
  std::set<std::string> eval_instructions;
  for (const auto& s : eval) eval_instructions.insert(s.instruction);
  for (auto source : {InstructionSource::kText, InstructionSource::kRenderedAudioX5})
    for (auto order : {Order::kAudioFirst, Order::kInstructionFirst})
      for (const auto& s : GenAlignmentCorpus(40, order, source, 4, GenConfig{.render = {.frames_lo = 1, .frames_hi = 1}})) {
        EXPECT_FALSE(IsZeroShotTask(s.task));
        EXPECT_EQ(eval_instructions.count(s.instruction), 0u);
        EXPECT_EQ(s.instruction.find("answer format"), std::string::npos);
        EXPECT_EQ(s.instruction.find("cipher"), std::string::npos);
      }
}

TEST(GenerationTest, PureFunctionOfSeed) {
  const auto a = GenZeroShotEval(12, 5), b = GenZeroShotEval(12, 5);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(a[i].instruction, b[i].instruction);
    EXPECT_EQ(a[i].features, b[i].features);
  }
  EXPECT_NE(GenPretrainCorpus(10, 1)[3].content + GenPretrainCorpus(10, 1)[4].content,
            GenPretrainCorpus(10, 2)[3].content + GenPretrainCorpus(10, 2)[4].content);
}

TEST(SplitIoTest, RoundTripsRecordsAndFeatures) {
  const auto dir = std::filesystem::temp_directory_path() / "aflab_split_test";
  std::filesystem::remove_all(dir);
  auto samples = GenZeroShotEval(6, 8);
  auto asr = GenAlignmentCorpus(3, Order::kInstructionFirst, InstructionSource::kRenderedAudio, 8);
  samples.insert(samples.end(), asr.begin(), asr.end());
  samples.push_back(GenPretrainCorpus(1, 8)[0]);
  WriteSplit(dir, "mixed", samples);
  const auto back = ReadSplit(dir, "mixed");
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_EQ(back[i].task, samples[i].task);
    EXPECT_EQ(back[i].order, samples[i].order);
    EXPECT_EQ(back[i].source, samples[i].source);
    EXPECT_EQ(back[i].instruction, samples[i].instruction);
    EXPECT_EQ(back[i].reference, samples[i].reference);
    EXPECT_EQ(back[i].answer_format, samples[i].answer_format);
    EXPECT_EQ(back[i].choices, samples[i].choices);
    EXPECT_EQ(back[i].features, samples[i].features);
    EXPECT_EQ(back[i].instruction_features, samples[i].instruction_features);
  }
  EXPECT_THROW(ReadSplit(dir, "absent"), InputError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace aflab::synthdata
