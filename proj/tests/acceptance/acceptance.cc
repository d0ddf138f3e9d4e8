#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "adaptvc/error.h"
#include "adaptvc/evaluation.h"
#include "adaptvc/grad_check.h"
#include "adaptvc/ops.h"
#include "adaptvc/training.h"

namespace fs = std::filesystem;
using namespace adaptvc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<audio::AudioClip> clips_of(const Corpus& c) {
  std::vector<audio::AudioClip> out;
  for (const auto& u : c.utterances) out.push_back(u.clip);
  return out;
}

Scalar dataset_loss(const Model& model, const std::vector<TrainingExample>& examples) {
  Scalar sum = 0;
  for (const auto& ex : examples) {
    Tape tape(false);
    Rng rng(0);
    sum += total_loss(tape, model, ex, rng).loss.parts.total;
  }
  return sum / static_cast<Scalar>(examples.size());
}

Scalar reconstruction_mse(const Model& model, const std::vector<audio::AudioClip>& clips) {
  Scalar sum = 0;
  for (const auto& clip : clips) {
    Rng rng(derive_seed(model.config().seed, "sampling"));
    sum += audio::mel_mse(model.convert(clip, clip, model.config().flow.steps, rng),
                          audio::mel_spectrogram(clip, model.config().mel));
  }
  return sum / static_cast<Scalar>(clips.size());
}

// 1. Flow path identities.
Outcome flow_identities() {
  Rng rng(101);
  bool exact = true;
  Scalar worst = 0, end_error = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t rows = 1 + static_cast<int64_t>(rng.uniform() * 6);
    const int64_t cols = 1 + static_cast<int64_t>(rng.uniform() * 6);
    const Tensor x0 = rng.normal_tensor({rows, cols}), x1 = rng.normal_tensor({rows, cols});
    const Scalar sigma = trial % 2 ? 1e-4 : rng.uniform() * 0.1;
    const Tensor start = ot_flow_point(x0, x1, 0.0, sigma);
    const Tensor end = ot_flow_point(x0, x1, 1.0, sigma);
    const Tensor end_plain = ot_flow_point(x0, x1, 1.0, 0.0);
    for (int64_t i = 0; i < x0.size(); ++i) {
      exact = exact && start[i] == x0[i] && end_plain[i] == x1[i];
      end_error = std::max(end_error, std::abs(end[i] - (sigma * x0[i] + x1[i])));
    }
    const Scalar t = 0.05 + 0.9 * rng.uniform(), h = 1e-6;
    const Tensor fwd = ot_flow_point(x0, x1, t + h, sigma);
    const Tensor bwd = ot_flow_point(x0, x1, t - h, sigma);
    const Tensor u = ot_target_field(x0, x1, sigma);
    for (int64_t i = 0; i < u.size(); ++i) {
      worst = std::max(worst, std::abs((fwd[i] - bwd[i]) / (2 * h) - u[i]));
    }
  }
  return {exact && end_error <= 1e-15 && worst <= 1e-5,
          fmt("endpoints exact=%g (sigma_min end offset error %.1e), max |fd - u| = %.2e over "
              "100 instances",
              exact, end_error, worst)};
}

// 2. Gradient suite.
Outcome gradient_suite() {
  std::vector<std::pair<std::string, Scalar>> errors;
  Rng rng(202);
  {
    std::vector<Parameter> layers;
    for (int l = 0; l < 12; ++l) layers.push_back({"layer" + std::to_string(l), rng.normal_tensor({3, 4})});
    Parameter logits{"logits", rng.normal_tensor({12})};
    const Tensor w = rng.normal_tensor({3, 4});
    std::vector<Parameter*> params{&logits};
    for (auto& p : layers) params.push_back(&p);
    const auto r = grad_check(
        [&](Tape& t) {
          std::vector<Var> vs;
          for (auto& p : layers) vs.push_back(t.param(p));
          return ops::sum(ops::mul(adapter_combine(vs, t.param(logits)), t.constant(w)));
        },
        params);
    errors.emplace_back("adapter_combine", r.max_relative_error);
  }
  bool codebook_zero = true;
  {
    Parameter h{"h", rng.normal_tensor({5, 4})}, cb{"cb", rng.normal_tensor({8, 4})};
    VqFreeze freeze;
    const auto r = grad_check(
        [&](Tape& t) {
          const QuantizeResult q = vq_quantize(t.param(h), t.param(cb), &freeze);
          return commitment_loss(t.param(h), q.selected);
        },
        {&h, &cb});
    errors.emplace_back("commitment_loss", r.max_relative_error);
    for (int64_t i = 0; i < cb.grad.size(); ++i) codebook_zero = codebook_zero && cb.grad[i] == 0;
  }
  {
    Parameter mu{"mu", rng.normal_tensor({6, 80})};
    const Tensor x = rng.normal_tensor({6, 80});
    const auto r = grad_check([&](Tape& t) { return prior_loss(t.param(mu), x); }, {&mu});
    errors.emplace_back("prior_loss", r.max_relative_error);
  }
  {
    DecoderConfig cfg;
    cfg.mel_bins = 6;
    cfg.feature_dim = 4;
    cfg.hidden = 8;
    cfg.time_dim = 8;
    ParameterStore store;
    Rng init(5);
    VectorFieldNet net(cfg, store, init);
    const Tensor x = rng.normal_tensor({4, 6}), mu = rng.normal_tensor({4, 6});
    const Tensor spk = rng.normal_tensor({5, 4}), w = rng.normal_tensor({4, 6});
    GradCheckOptions opts;
    opts.max_elements_per_param = 6;
    const auto r = grad_check(
        [&](Tape& t) {
          return ops::sum(ops::mul(
              net.forward(t, t.constant(x), 0.3, t.constant(mu), t.constant(spk)), t.constant(w)));
        },
        store.all(), opts);
    errors.emplace_back("vector_field", r.max_relative_error);
  }
  {
    ModelConfig c;
    c.extractor.dim = 8;
    c.decoder.feature_dim = 8;
    c.decoder.hidden = 8;
    c.decoder.time_dim = 8;
    c.decoder.levels = 1;
    c.decoder.blocks_per_level = 1;
    c.encoder.codebook_size = 16;
    Model model(c);
    audio::AudioClip clip = make_corpus(1, 1, 7).utterances[0].clip;
    clip.samples.resize(3200);
    const TrainingExample ex = prepare_example(model, clip);
    VqFreeze freeze;
    std::vector<Parameter*> params;
    for (Parameter* p : model.params().all()) {
      if (p->trainable) params.push_back(p);
    }
    GradCheckOptions opts;
    opts.max_elements_per_param = 4;
    const auto r = grad_check(
        [&](Tape& t) {
          Rng r(9);
          return total_loss(t, model, ex, r, &freeze).loss.total;
        },
        params, opts);
    errors.emplace_back("total_loss", r.max_relative_error);
  }
  bool ok = codebook_zero;
  std::string detail;
  for (const auto& [name, e] : errors) {
    ok = ok && e <= 1e-3;
    detail += name + fmt("=%.1e ", e);
  }
  detail += codebook_zero ? "codebook-grad=0" : "codebook-grad!=0";
  return {ok, detail};
}

// 3. Analytic prior constant.
Outcome prior_constant() {
  Rng rng(303);
  Scalar worst = 0;
  for (int64_t frames : {1, 50}) {
    const Tensor mu = rng.normal_tensor({frames, 80});
    const Scalar expected = 40.0 * frames * std::log(2 * std::numbers::pi);
    worst = std::max(worst, std::abs(prior_loss(mu, mu) - expected) / expected);
  }
  return {worst <= 1e-3, fmt("max relative error %.2e for T in {1, 50}", worst)};
}

// 4. VQ contracts.
Outcome vq_contracts() {
  Rng rng(404);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t frames = 1 + static_cast<int64_t>(rng.uniform() * 8);
    const int64_t dim = 1 + static_cast<int64_t>(rng.uniform() * 8);
    const int64_t size = 1 + static_cast<int64_t>(rng.uniform() * 32);
    const Tensor h = rng.normal_tensor({frames, dim}), cb = rng.normal_tensor({size, dim});
    const std::vector<int64_t> got = nearest_codes(h, cb);
    bool all = true;
    for (int64_t t = 0; t < frames; ++t) {
      long double best = std::numeric_limits<long double>::infinity();
      int64_t best_k = -1;
      for (int64_t k = 0; k < size; ++k) {
        long double d = 0;
        for (int64_t j = 0; j < dim; ++j) {
          const long double diff = static_cast<long double>(h.at(t, j)) - cb.at(k, j);
          d += diff * diff;
        }
        if (d < best) {
          best = d;
          best_k = k;
        }
      }
      all = all && got[static_cast<size_t>(t)] == best_k;
    }
    agree += all;
  }

  bool straight_through = true;
  {
    Parameter h{"h", rng.normal_tensor({6, 3})}, cb{"cb", rng.normal_tensor({4, 3})};
    const Tensor w = rng.normal_tensor({6, 3});
    h.zero_grad();
    cb.zero_grad();
    Tape tape;
    const QuantizeResult q = vq_quantize(tape.param(h), tape.param(cb));
    tape.backward(ops::sum(ops::mul(q.quantized, tape.constant(w))));
    Tensor expected_cb({4, 3});
    for (int64_t t = 0; t < 6; ++t) {
      for (int64_t j = 0; j < 3; ++j) expected_cb.at(q.indices[static_cast<size_t>(t)], j) += w.at(t, j);
    }
    straight_through = h.grad == w && cb.grad == expected_cb;
  }

  bool ties = true;
  {
    // Equidistant codewords around the origin and duplicated rows.
    Tensor cb({4, 2}, {1, 0, -1, 0, 0, 1, 0, -1});
    ties = ties && nearest_codes(Tensor({1, 2}), cb)[0] == 0;
    Tensor dup({3, 2}, {5, 5, 2, 2, 2, 2});
    ties = ties && nearest_codes(Tensor({1, 2}, {2, 2}), dup)[0] == 1;
    Tensor mid({2, 1}, {-1, 1});
    ties = ties && nearest_codes(Tensor({1, 1}), mid)[0] == 0;
  }
  return {agree == 1000 && straight_through && ties,
          fmt("oracle agreement %g/1000, straight-through exact=%g, ties lowest=%g", agree,
              straight_through, ties)};
}

// 5. 2-D conditional flow matching sanity check.
Outcome cfm_2d() {
  ParameterStore store;
  Rng rng(505);
  MlpField field(2, 64, 8, store, rng);
  AdamConfig ac;
  ac.learning_rate = 1e-3;
  Adam adam(store, ac);
  FlowConfig flow;
  CfmOptions opts;
  opts.time_per_row = true;
  const TapeField tape_field = [&](Tape& t, Var x, const Tensor& times) {
    return field(t, x, times);
  };
  constexpr int kSteps = 6000, kBatch = 256;
  for (int step = 0; step < kSteps; ++step) {
    Tensor x1 = rng.normal_tensor({kBatch, 2}, 0.5);
    for (Scalar& v : x1.values()) v += 3.0;
    store.zero_grad();
    Tape tape;
    tape.backward(cfm_loss(tape, x1, tape_field, rng, flow, opts));
    adam.step();
  }
  const Tensor x0 = rng.normal_tensor({2000, 2});
  const Tensor x = euler_integrate(x0, 32, [&](const Tensor& xt, Scalar t) {
    return field.evaluate(xt, t);
  });
  Scalar mean[2] = {0, 0}, var[2] = {0, 0};
  for (int64_t i = 0; i < 2000; ++i) {
    for (int j = 0; j < 2; ++j) mean[j] += x.at(i, j) / 2000;
  }
  for (int64_t i = 0; i < 2000; ++i) {
    for (int j = 0; j < 2; ++j) var[j] += (x.at(i, j) - mean[j]) * (x.at(i, j) - mean[j]) / 1999;
  }
  const Scalar sd0 = std::sqrt(var[0]), sd1 = std::sqrt(var[1]);
  const bool ok = std::abs(mean[0] - 3) <= 0.15 && std::abs(mean[1] - 3) <= 0.15 &&
                  std::abs(sd0 - 0.5) <= 0.15 && std::abs(sd1 - 0.5) <= 0.15;
  return {ok, fmt("mean (%.3f, %.3f) std (%.3f, %.3f) over 2000 samples", mean[0], mean[1], sd0, sd1)};
}

// 6. Overfit reconstruction.
Outcome overfit() {
  const Corpus corpus = make_corpus(2, 4, 606);
  const auto clips = clips_of(corpus);
  ModelConfig config;
  config.seed = 606;
  config.extractor.seed = 606;
  Model model(config);
  const Scalar untrained_mse = reconstruction_mse(model, clips);
  Trainer trainer(model, clips);
  trainer.initialize_from_data();
  const Scalar initial_mse = reconstruction_mse(model, clips);
  const Scalar initial = dataset_loss(model, trainer.examples());
  trainer.run(config.optim.steps);
  const Scalar final_loss = dataset_loss(model, trainer.examples());
  const Scalar trained_mse = reconstruction_mse(model, clips);
  const Scalar baseline = std::min(untrained_mse, initial_mse);
  const bool ok = final_loss < 0.5 * initial && trained_mse * 2 <= baseline;
  return {ok, fmt("loss %.1f -> %.1f; ", initial, final_loss) +
                  fmt("mel MSE untrained %.3f (after data init %.3f) -> trained %.3f",
                      untrained_mse, initial_mse, trained_mse)};
}

// 7. Disentanglement proxy on held-out speakers and scripts.
std::unique_ptr<Model> g_trained;

Outcome disentanglement() {
  const Corpus train = make_corpus(4, 8, 707);
  const Corpus held_out = make_corpus(4, 8, 7070);
  ModelConfig config;
  config.seed = 707;
  config.extractor.seed = 707;
  g_trained = std::make_unique<Model>(config);
  const auto clips = clips_of(train);
  Trainer trainer(*g_trained, clips);
  trainer.initialize_from_data();
  trainer.run(config.optim.steps);
  const Model& model = *g_trained;
  const auto pairs = cross_speaker_pairs(held_out, 20, 707);
  const auto trained = disentanglement_score(pairs, [&](const audio::AudioClip& s,
                                                        const audio::AudioClip& r) {
    Rng rng(derive_seed(config.seed, "sampling"));
    return model.convert(s, r, config.flow.steps, rng);
  });
  const auto identity = disentanglement_score(
      pairs, [](const audio::AudioClip& s, const audio::AudioClip&) { return audio::mel_spectrogram(s); });
  const auto oracle = disentanglement_score(
      pairs, [](const audio::AudioClip&, const audio::AudioClip& r) { return audio::mel_spectrogram(r); });
  const bool ok = trained.win_rate >= 0.8;
  return {ok, fmt("win-rate %.2f on %g held-out pairs (copy-source %.2f, copy-reference %.2f)",
                  trained.win_rate, static_cast<double>(pairs.size()), identity.win_rate,
                  oracle.win_rate)};
}

// 8. RTF trend over sampling steps.
Outcome rtf_trend() {
  std::unique_ptr<Model> fresh;
  if (!g_trained) fresh = std::make_unique<Model>(ModelConfig{});
  const Model& model = g_trained ? *g_trained : *fresh;
  const audio::AudioClip clip = make_corpus(1, 1, 808).utterances[0].clip;
  const RtfResult r1 = measure_rtf(model, clip, 1);
  const RtfResult r5 = measure_rtf(model, clip, 5);
  const RtfResult r10 = measure_rtf(model, clip, 10);
  const Scalar ratio = r10.rtf / r1.rtf;
  const bool ok = r1.rtf <= r5.rtf && r5.rtf <= r10.rtf && ratio >= 3 && ratio <= 10;
  std::string detail = fmt("rtf(1)=%.4f rtf(5)=%.4f rtf(10)=%.4f ratio %.2f", r1.rtf, r5.rtf,
                           r10.rtf, ratio);
  if (r1.noisy || r5.noisy || r10.noisy) detail += " [noisy timing]";
  return {ok, detail};
}

// 9. Ablation variants train without numerical failure.
Outcome ablations() {
  const auto clips = clips_of(make_corpus(2, 4, 909));
  struct Variant {
    const char* name;
    std::function<void(ModelConfig&)> apply;
  };
  const Variant variants[] = {
      {"no-adapter", [](ModelConfig& c) { c.encoder.use_adapter = false; }},
      {"no-vq", [](ModelConfig& c) { c.encoder.use_vq = false; }},
      {"saln", [](ModelConfig& c) { c.decoder.conditioning = Conditioning::kSaln; }},
      {"mean-add", [](ModelConfig& c) { c.decoder.conditioning = Conditioning::kMeanAdd; }},
  };
  bool ok = true;
  std::string detail;
  for (const auto& v : variants) {
    ModelConfig c;
    c.seed = 909;
    c.extractor.seed = 909;
    v.apply(c);
    Model model(c);
    Trainer trainer(model, clips);
    trainer.initialize_from_data();
    bool finite = true, zero_commit = true;
    try {
      trainer.run(50);
    } catch (const NumericalError&) {
      finite = false;
    }
    for (const auto& r : trainer.history()) {
      finite = finite && std::isfinite(r.loss.total);
      zero_commit = zero_commit && r.loss.commit == 0.0;
    }
    const bool pass = finite && trainer.history().size() == 50 && (c.encoder.use_vq || zero_commit);
    ok = ok && pass;
    detail += std::string(v.name) + (pass ? " ok" : " FAILED");
    if (!c.encoder.use_vq) detail += zero_commit ? " (commit=0)" : " (commit!=0)";
    detail += "; ";
  }
  return {ok, detail};
}

// 10. End-to-end reproducibility through the command-line tool.
std::string g_cli;

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome reproducibility() {
  if (g_cli.empty()) return {false, "command-line tool path not given (--cli)"};
  const fs::path root = fs::temp_directory_path() / "adaptvc_acceptance_repro";
  fs::remove_all(root);
  auto run_once = [&](const std::string& tag) {
    const fs::path dir = root / tag;
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::string cmds[] = {
        g_cli + " gen-data --speakers 2 --utts 2 --seed 1010 --out " + d + "/data",
        g_cli + " train --seed 1010 --steps 100 --data " + d + "/data --out " + d + "/model.ckpt",
        g_cli + " convert --ckpt " + d + "/model.ckpt --source " + d + "/data/spk0_utt0.wav" +
            " --reference " + d + "/data/spk1_utt1.wav --steps 10 --out " + d + "/out.wav",
    };
    for (const auto& cmd : cmds) {
      if (std::system((cmd + " > " + d + "/log.txt 2>&1").c_str()) != 0) return false;
    }
    return true;
  };
  if (!run_once("a") || !run_once("b")) return {false, "a pipeline command failed"};
  const auto la = slurp(root / "a/model.loss.csv"), lb = slurp(root / "b/model.loss.csv");
  const auto wa = slurp(root / "a/out.wav"), wb = slurp(root / "b/out.wav");
  const bool ok = !la.empty() && !wa.empty() && la == lb && wa == wb;
  return {ok, fmt("loss CSV %g bytes identical=%g, WAV %g bytes identical=%g",
                  static_cast<double>(la.size()), la == lb, static_cast<double>(wa.size()), wa == wb)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      g_cli = argv[++i];
    } else {
      only.insert(std::atoi(arg.c_str()));
    }
  }
  const std::vector<Criterion> criteria = {
      {1, "flow-path identities", 1, flow_identities},
      {2, "gradient suite", 120, gradient_suite},
      {3, "analytic prior constant", 60, prior_constant},
      {4, "VQ contracts", 60, vq_contracts},
      {5, "2-D CFM sanity", 300, cfm_2d},
      {6, "overfit reconstruction", 900, overfit},
      {7, "disentanglement proxy", 1800, disentanglement},
      {8, "RTF trend", 60, rtf_trend},
      {9, "ablation executability", 600, ablations},
      {10, "reproducibility", 600, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" [over time budget of %.0f s]", c.budget_s);
    }
    std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
