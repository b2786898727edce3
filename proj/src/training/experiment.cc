#include "aflab/training/experiment.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "aflab/compute/ops.h"
#include "aflab/compute/optimizer.h"
#include "aflab/errors.h"
#include "aflab/training/schedule.h"

namespace aflab::training {

namespace {

constexpr std::uint64_t kAdapterSalt = 0x616461707472ULL;
constexpr std::uint64_t kHeadSalt = 0x68656164ULL;
constexpr std::uint64_t kScheduleSalt = 0x736368ULL;
constexpr std::uint64_t kMixSalt = 0x6d6978ULL;

bool SpokenInstruction(const ExperimentPreset& p) { return p.source != synthdata::InstructionSource::kText; }

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string Fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

template <class F>
void ParallelFor(int n, int threads, F&& body) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
        next = n;
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

adapter::Adapter InitialAdapter(const adapter::AdapterConfig& cfg, std::uint64_t train_seed) {
  Rng rng(Rng::Mix(train_seed ^ kAdapterSalt));
  return adapter::Adapter(cfg, rng);
}

SpeechLlm BuildRunModel(const Settings& settings, const ExperimentPreset& preset, const Checkpoint& lm_ckpt,
                        const Checkpoint& encoder_ckpt) {
  SpeechLlm m;
  m.tokenizer = ReadTokenizer(lm_ckpt);
  m.lm = LoadLm(lm_ckpt);
  m.lm.SetFrozen(true);
  m.encoder = LoadEncoder(encoder_ckpt);
  if (settings.train.ctc_init == CtcInit::kRandom) {
    Rng head_rng(Rng::Mix(settings.train.seed ^ kHeadSalt));
    m.encoder.ReinitializeCtcHead(head_rng);
  }
  adapter::AdapterConfig ac = settings.adapter;
  ac.encoder_dim = m.encoder.config().d_enc;
  ac.llm_dim = m.lm.d_model();
  ac.mode = preset.adapter;
  m.adapter = InitialAdapter(ac, settings.train.seed);
  return m;
}

std::vector<synthdata::TaskSample> TemplateForPreset(std::vector<synthdata::TaskSample> samples,
                                                     const ExperimentPreset& preset, std::uint64_t seed,
                                                     const synthdata::GenConfig& gen) {
  for (synthdata::TaskSample& s : samples) synthdata::ApplyAlignmentTemplate(s, preset.order, preset.source, seed, gen);
  return samples;
}

AlignmentStats MeasureAlignment(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, int limit) {
  AlignmentStats st;
  double agree = 0.0, ratio = 0.0, audio_ms = 0.0, embeddings = 0.0;
  const int n = std::min<int>(limit, static_cast<int>(samples.size()));
  const double enc_frame_ms = kInputFrameMs * model.encoder.config().subsample_factor;
  for (int i = 0; i < n; ++i) {
    const synthdata::TaskSample& s = samples[i];
    Graph g(false);
    const backbone::EncoderOutput out = model.encoder.Forward(g, s.features);
    const int u = static_cast<int>(s.content.size());
    const int m = static_cast<int>(ctc::Collapse(ctc::GreedyPath(out.ctc_logp.value()).labels).size());
    agree += m == u ? 1.0 : 0.0;
    ratio += static_cast<double>(m) / u;
    int rows = 0;
    switch (model.adapter.config().mode) {
      case adapter::AdapterMode::kAlignFormer: rows = m; break;
      default: rows = model.adapter.OutputRows(out.frames);
    }
    audio_ms += out.frames * enc_frame_ms;
    embeddings += rows;
  }
  st.utterances = n;
  if (n > 0) {
    st.m_agreement = agree / n;
    st.mean_m_ratio = ratio / n;
    st.token_rate_ms = embeddings > 0 ? audio_ms / embeddings : 0.0;
  }
  return st;
}

RunArtifacts RunExperiment(SpeechLlm& model, const ExperimentPreset& preset, const TrainSettings& train,
                           const std::vector<synthdata::TaskSample>& train_samples,
                           const std::vector<synthdata::TaskSample>& heldout, const std::filesystem::path& out_dir,
                           const ProgressFn& progress) {
  const bool alignformer = preset.adapter == adapter::AdapterMode::kAlignFormer;
  const bool spoken = SpokenInstruction(preset);
  RunArtifacts art;
  ParameterList lm_params = model.LmParameters();
  model.lm.SetFrozen(true);
  art.lm_checksum_before = ChecksumParameters(lm_params);

  SetTrainable(model.encoder.EncoderParameters(), train.train_encoder);
  SetTrainable(model.encoder.CtcHeadParameters(), alignformer);
  SetTrainable(model.AdapterParameters(), true);
  ParameterList params;
  for (Parameter* p : model.encoder.Parameters())
    if (p->trainable) params.push_back(p);
  for (Parameter* p : model.AdapterParameters()) params.push_back(p);
  AdamW opt(params);

  BatchSampler sampler(static_cast<int>(train_samples.size()), train.seed);
  Rng schedule_rng(Rng::Mix(train.seed ^ kScheduleSalt));
  Rng mix_rng(Rng::Mix(train.seed ^ kMixSalt));
  std::ostringstream csv;
  csv << kMetricsHeader << '\n';
  double w_ntp = 0.0, w_ctc = 0.0, w_comb = 0.0;
  int w_n = 0, w_ctc_n = 0;

  for (int step = 0; step < train.total_steps; ++step) {
    const double lr = LrAt(step, train.warmup_steps, train.total_steps, train.peak_lr);
    const ctc::AlignmentMode mode =
        alignformer ? AlignmentSchedule(step, train.total_steps, train.alignment, train.p_greedy_max, schedule_rng)
                    : ctc::AlignmentMode::kGreedy;
    ZeroGrads(params);
    for (int b = 0; b < train.batch_size; ++b) {
      const synthdata::TaskSample& s = train_samples[sampler.Next()];
      const std::vector<int> target = model.tokenizer.Encode(s.content);
      bool use_ntp = true, use_ctc = alignformer && train.lambda_ctc > 0;
      double ctc_weight = train.lambda_ctc;
      if (alignformer && train.ctc_task_mixing) {
        use_ctc = mix_rng.Uniform() < train.lambda_ctc;
        use_ntp = !use_ctc;
        ctc_weight = 1.0;
      }
      Graph g;
      AudioEmbedding ae = EmbedAudio(g, model, s.features, mode, &target);
      if (ae.forced_fallback) ++art.forced_fallbacks;
      double ntp_value = 0.0, ctc_value = 0.0;
      Var objective;
      if (use_ntp) {
        Var instr;
        if (spoken) {
          const std::vector<int> itarget = model.tokenizer.Encode(s.instruction);
          instr = EmbedAudio(g, model, s.instruction_features, mode, &itarget).embeddings;
        }
        backbone::PromptInputs in = BuildPromptInputs(model, s, preset.order, ae.embeddings, instr);
        in.response = target;
        const auto ntp = backbone::NtpLoss(g, model.lm, backbone::AssemblePrompt(g, model.lm, in));
        if (!ntp) {
          ++art.skipped_empty;
        } else {
          objective = *ntp;
          ntp_value = ntp->scalar();
        }
      }
      if (use_ctc) {
        // Per-token normalization puts the CTC term on the NTP scale.
        Var ctc_loss = Scale(ctc::CtcLoss(ae.enc.ctc_logp, target), 1.0 / target.size());
        ctc_value = ctc_loss.scalar();
        Var weighted = Scale(ctc_loss, ctc_weight);
        objective = objective.valid() ? Add(objective, weighted) : weighted;
      }
      double combined = 0.0;
      try {
        combined = CombinedLoss(ntp_value, ctc_value, use_ctc ? ctc_weight : 0.0);
      } catch (const TrainingError& e) {
        if (!out_dir.empty()) WriteCheckpoint(out_dir / "last_good.aflab", SaveModel(model));
        throw TrainingError(std::string(e.what()) + " at step " + std::to_string(step) + " (" + s.id + ")");
      }
      if (!objective.valid()) continue;
      g.Backward(Scale(objective, 1.0 / train.batch_size));
      if (use_ntp) {
        w_ntp += ntp_value;
        ++w_n;
      }
      if (use_ctc) {
        w_ctc += ctc_value;
        ++w_ctc_n;
      }
      w_comb += combined;
    }
    ClipGradNorm(params, train.grad_clip);
    opt.Step(lr);

    const bool last = step + 1 == train.total_steps;
    if ((step + 1) % train.log_every == 0 || last) {
      const AlignmentStats st = MeasureAlignment(model, heldout, train.agreement_samples);
      const double samples = std::max(1, (step % train.log_every + 1) * train.batch_size);
      csv << step + 1 << ',' << Fixed(lr, 8) << ',' << Fixed(w_n ? w_ntp / w_n : 0.0) << ','
          << Fixed(w_ctc_n ? w_ctc / w_ctc_n : 0.0) << ',' << Fixed(w_comb / samples) << ','
          << Fixed(alignformer ? GreedyProbability(step, train.total_steps, train.alignment, train.p_greedy_max) : 0.0,
                   4)
          << ',' << Fixed(st.m_agreement, 4) << '\n';
      if (progress) {
        std::ostringstream os;
        os << RunLabel(preset) << " step " << step + 1 << "/" << train.total_steps << " ntp "
           << Fixed(w_n ? w_ntp / w_n : 0.0, 4) << " ctc " << Fixed(w_ctc_n ? w_ctc / w_ctc_n : 0.0, 4)
           << " m-agree " << Fixed(st.m_agreement, 3);
        progress(os.str());
      }
      w_ntp = w_ctc = w_comb = 0.0;
      w_n = w_ctc_n = 0;
    }
  }

  art.steps = train.total_steps;
  art.metrics_csv = csv.str();
  art.lm_checksum_after = ChecksumParameters(lm_params);
  art.alignment = MeasureAlignment(model, heldout, static_cast<int>(heldout.size()));
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    WriteText(out_dir / "metrics.csv", art.metrics_csv);
    std::map<std::string, std::string> meta = {{"run.preset", preset.id},
                                              {"run.order", backbone::ToString(preset.order)},
                                              {"run.instruction_source", synthdata::ToString(preset.source)},
                                              {"run.adapter", adapter::ToString(preset.adapter)},
                                              {"run.steps", std::to_string(art.steps)}};
    WriteCheckpoint(out_dir / "model.aflab", SaveModel(model, meta));
    std::ostringstream rep;
    rep << "utterances " << art.alignment.utterances << "\n"
        << "greedy_m_agreement " << Fixed(art.alignment.m_agreement, 4) << "\n"
        << "mean_m_over_u " << Fixed(art.alignment.mean_m_ratio, 4) << "\n"
        << "token_rate_ms " << Fixed(art.alignment.token_rate_ms, 1) << "\n"
        << "forced_fallbacks " << art.forced_fallbacks << "\n"
        << "skipped_empty " << art.skipped_empty << "\n"
        << "lm_checksum_before " << art.lm_checksum_before << "\n"
        << "lm_checksum_after " << art.lm_checksum_after << "\n";
    WriteText(out_dir / "alignment.txt", rep.str());
  }
  return art;
}

ifr::IfrReport EvaluateZeroShot(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, int max_tokens,
                                int threads) {
  std::vector<const synthdata::TaskSample*> todo;
  for (const synthdata::TaskSample& s : samples)
    if (synthdata::IsZeroShotTask(s.task)) todo.push_back(&s);
  std::vector<ifr::SampleResult> results(todo.size());
  ParallelFor(static_cast<int>(todo.size()), threads, [&](int i) {
    const synthdata::TaskSample& s = *todo[i];
    const std::string response = Respond(model, s, backbone::Order::kInstructionFirst, false, max_tokens);
    ifr::SampleResult& r = results[i];
    r.id = s.id;
    r.task = synthdata::ToString(s.task);
    r.response = response;
    ifr::Detection d;
    if (s.task == synthdata::Task::kCipherTranslate) {
      d = ifr::DetectFollowed(response, ifr::DetectionRule::TargetAlphabet(synthdata::kCipherAlphabet));
      r.correct = d.followed && response == s.reference;
    } else {
      d = ifr::DetectFollowed(response, ifr::DetectionRule::AnswerFormat(synthdata::kAnswerPrefix, "ABC"));
      r.correct = d.followed && d.answer && *d.answer == s.reference.substr(s.reference.size() - 1);
    }
    r.followed = d.followed;
    r.reason = d.reason;
  });
  return ifr::ComputeIfr(results);
}

double EvaluateAsr(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, const ExperimentPreset& preset,
                   int max_tokens, int threads) {
  std::vector<double> ter(samples.size());
  ParallelFor(static_cast<int>(samples.size()), threads, [&](int i) {
    const std::string response = Respond(model, samples[i], preset.order, SpokenInstruction(preset), max_tokens);
    ter[i] = ifr::TokenErrorRate(response, samples[i].content);
  });
  double sum = 0.0;
  for (double v : ter) sum += v;
  return ter.empty() ? 0.0 : sum / ter.size();
}

ifr::CosineSummary EvaluateCosine(SpeechLlm& model, const std::vector<synthdata::TaskSample>& samples, int threads) {
  if (model.adapter.config().mode != adapter::AdapterMode::kAlignFormer)
    throw InputError("cosine report needs an alignformer adapter (m = U pairing)");
  std::vector<std::optional<ifr::CosineSummary>> parts(samples.size());
  ParallelFor(static_cast<int>(samples.size()), threads, [&](int i) {
    Graph g(false);
    const std::vector<int> target = model.tokenizer.Encode(samples[i].content);
    const AudioEmbedding ae = EmbedAudio(g, model, samples[i].features, ctc::AlignmentMode::kForced, &target);
    if (!ae.forced_fallback) parts[i] = ifr::CosineReport(ae.embeddings.value(), model.lm.Embed(g, target).value());
  });
  std::vector<ifr::CosineSummary> kept;
  for (auto& p : parts)
    if (p) kept.push_back(*p);
  return ifr::MergeCosine(kept);
}

}  // namespace aflab::training
