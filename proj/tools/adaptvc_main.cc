#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adaptvc/error.h"
#include "adaptvc/evaluation.h"
#include "adaptvc/training.h"

namespace fs = std::filesystem;
using namespace adaptvc;

namespace {

constexpr int kPairCount = 20;

struct CommonOptions {
  std::optional<uint64_t> seed;
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "Root seed for every random stream");
  cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "Config override, e.g. --set train.lr=0.002");
}

ModelConfig resolve_config(const CommonOptions& o) {
  ModelConfig c = o.config.empty() ? ModelConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) c.apply_override(kv);
  if (o.seed) c.apply_override("seed=" + std::to_string(*o.seed));
  return c;
}

audio::AudioClip load_clip(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("no such file: " + path.string());
  audio::AudioClip clip = audio::load_wav(path);
  if (clip.sample_rate != 16000) clip = audio::resample(clip, 16000);
  return clip;
}

void write_pairs(const Corpus& corpus, const fs::path& dir, uint64_t seed) {
  const auto pairs = cross_speaker_pairs(corpus, kPairCount, seed);
  std::map<const audio::AudioClip*, std::string> names;
  for (const auto& u : corpus.utterances) names[&u.clip] = u.id + ".wav";
  std::ofstream out(dir / "pairs.csv");
  out << "source,reference\n";
  for (const auto& p : pairs) out << names[p.source] << ',' << names[p.reference] << '\n';
  if (!out) throw DataError("failed writing " + (dir / "pairs.csv").string());
}

std::vector<std::pair<fs::path, fs::path>> read_pairs(const fs::path& file, const fs::path& data) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open pairs file " + file.string());
  std::vector<std::pair<fs::path, fs::path>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("source,", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": expected source,reference");
    }
    auto resolve = [&](const std::string& p) {
      const fs::path path(p);
      return path.is_absolute() ? path : data / path;
    };
    out.emplace_back(resolve(line.substr(0, comma)), resolve(line.substr(comma + 1)));
  }
  if (out.empty()) throw DataError("pairs file " + file.string() + " lists no pairs");
  return out;
}

int cmd_gen_data(int speakers, int utts, uint64_t seed, const fs::path& out) {
  const Corpus corpus = make_corpus(speakers, utts, seed);
  write_corpus(corpus, out);
  if (speakers > 1 && utts > 1) write_pairs(corpus, out, seed);
  std::printf("wrote %zu utterances to %s\n", corpus.utterances.size(), out.string().c_str());
  return 0;
}

int cmd_train(ModelConfig config, const fs::path& data, const fs::path& out, fs::path loss_csv) {
  const Corpus corpus = load_corpus(data);
  std::vector<audio::AudioClip> clips;
  for (const auto& u : corpus.utterances) clips.push_back(u.clip);
  Model model(config);
  Trainer trainer(model, clips);
  trainer.initialize_from_data();
  if (loss_csv.empty()) loss_csv = fs::path(out).replace_extension(".loss.csv");
  const int steps = config.optim.steps;
  try {
    trainer.run(steps, [&](const LossRecord& r) {
      if (r.step % 100 == 0 || r.step + 1 == steps) {
        std::printf("step %lld total %.4f commit %.4f prior %.4f dec %.4f\n",
                    static_cast<long long>(r.step), r.loss.total, r.loss.commit, r.loss.prior,
                    r.loss.dec);
        std::fflush(stdout);
      }
    });
  } catch (const NumericalError&) {
    write_loss_csv(loss_csv, trainer.history());
    throw;
  }
  write_loss_csv(loss_csv, trainer.history());
  save_checkpoint(out, model, {trainer.step_index(), trainer.rng().state()});
  std::printf("wrote %s and %s\n", out.string().c_str(), loss_csv.string().c_str());
  return 0;
}

int cmd_convert(const fs::path& ckpt, const fs::path& source, const fs::path& reference,
                std::optional<int> steps, std::optional<uint64_t> seed, const fs::path& out) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const Model& model = *loaded.model;
  const audio::AudioClip src = load_clip(source), ref = load_clip(reference);
  const int n = steps.value_or(model.config().flow.steps);
  Rng rng(derive_seed(seed.value_or(model.config().seed), "sampling"));
  const auto t0 = std::chrono::steady_clock::now();
  const audio::MelSpectrogram mel = model.convert(src, ref, n, rng);
  const auto t1 = std::chrono::steady_clock::now();
  const audio::AudioClip wav = audio::griffin_lim(mel, model.config().mel);
  audio::save_wav(out, wav);
  std::printf("decoder RTF (%d steps): %.4f\n", n,
              std::chrono::duration<double>(t1 - t0).count() / src.duration());
  return 0;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& pairs_file, int steps,
             std::optional<uint64_t> seed, const fs::path& out) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const Model& model = *loaded.model;
  const auto listed = read_pairs(pairs_file, data);
  std::map<fs::path, audio::AudioClip> clips;
  for (const auto& [s, r] : listed) {
    if (!clips.count(s)) clips[s] = load_clip(s);
    if (!clips.count(r)) clips[r] = load_clip(r);
  }
  std::vector<ConversionPair> pairs;
  for (const auto& [s, r] : listed) pairs.push_back({&clips.at(s), &clips.at(r)});

  const uint64_t root = seed.value_or(model.config().seed);
  EvalReport report;
  const audio::AudioClip& probe = *pairs.front().source;
  for (int n : {1, 5, 10}) {
    report.rtf.emplace_back(n, measure_rtf(model, probe, n));
    if (report.rtf.back().second.noisy) {
      std::fprintf(stderr, "warning: rtf for %d steps is noisy (cv %.2f)\n", n,
                   report.rtf.back().second.cv);
    }
  }
  report.pipeline_rtf.emplace_back(steps, measure_pipeline_rtf(model, probe, steps));

  std::vector<const audio::AudioClip*> sources;
  for (const auto& p : pairs) {
    if (std::find(sources.begin(), sources.end(), p.source) == sources.end()) {
      sources.push_back(p.source);
    }
  }
  for (const audio::AudioClip* s : sources) {
    Rng rng(derive_seed(root, "sampling"));
    report.reconstruction_mse +=
        audio::mel_mse(model.convert(*s, *s, steps, rng),
                       audio::mel_spectrogram(*s, model.config().mel)) /
        static_cast<Scalar>(sources.size());
  }
  report.disentanglement = disentanglement_score(
      pairs, [&](const audio::AudioClip& s, const audio::AudioClip& r) {
        Rng rng(derive_seed(root, "sampling"));
        return model.convert(s, r, steps, rng);
      });
  report.adapters = adapter_report(model);

  std::ofstream f(out);
  f << report.to_json() << '\n';
  if (!f) throw DataError("failed writing " + out.string());
  std::printf("win-rate %.3f over %zu pairs, reconstruction mel MSE %.4f\n",
              report.disentanglement.win_rate, pairs.size(), report.reconstruction_mse);
  for (const auto& [n, r] : report.rtf) std::printf("rtf(%d) %.4f\n", n, r.rtf);
  return 0;
}

int cmd_adapter_report(const fs::path& ckpt, const fs::path& out) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const AdapterReport report = adapter_report(*loaded.model);
  write_adapter_report(report, out);
  std::cout << adapter_ascii(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot voice conversion with adapters and conditional flow matching"};
  app.require_subcommand(1);

  int speakers = 4, utts = 4;
  uint64_t gen_seed = 0;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic multi-speaker corpus");
  gen->add_option("--speakers", speakers, "Number of speakers")->check(CLI::Range(1, 1000000));
  gen->add_option("--utts", utts, "Utterances per speaker")->check(CLI::Range(1, 1000000));
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_option("--out", gen_out, "Output directory")->required();

  CommonOptions train_opts;
  std::string train_data, train_out, loss_csv, condition;
  std::optional<int> train_steps;
  bool no_vq = false, no_adapter = false;
  auto* train = app.add_subcommand("train", "Train a model on a corpus directory");
  add_common(train, train_opts);
  train->add_option("--data", train_data, "Corpus directory with manifest.csv")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--loss-csv", loss_csv, "Loss log path (default: <out>.loss.csv)");
  train->add_option("--steps", train_steps, "Optimizer steps")->check(CLI::Range(0, 100000000));
  train->add_flag("--no-vq", no_vq, "Disable vector quantization")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  train->add_flag("--no-adapter", no_adapter, "Use fixed single-layer features")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  train->add_option("--condition", condition, "Decoder conditioning")
      ->check(CLI::IsMember({"cross-attention", "saln", "mean-add"}));

  std::string conv_ckpt, conv_src, conv_ref, conv_out;
  std::optional<int> conv_steps;
  std::optional<uint64_t> conv_seed;
  auto* conv = app.add_subcommand("convert", "Convert a source utterance to a reference voice");
  conv->add_option("--ckpt", conv_ckpt, "Checkpoint")->required();
  conv->add_option("--source", conv_src, "Source WAV (content)")->required();
  conv->add_option("--reference", conv_ref, "Reference WAV (speaker)")->required();
  conv->add_option("--steps", conv_steps, "Sampling steps")->check(CLI::Range(1, 1000000));
  conv->add_option("--seed", conv_seed, "Sampling seed (default: checkpoint seed)");
  conv->add_option("--out", conv_out, "Output WAV")->required();

  std::string eval_ckpt, eval_data, eval_pairs, eval_out;
  int eval_steps = 10;
  std::optional<uint64_t> eval_seed;
  auto* eval = app.add_subcommand("eval", "Write an evaluation report");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--data", eval_data, "Directory the pairs file paths are relative to")
      ->required();
  eval->add_option("--pairs", eval_pairs, "CSV of source,reference pairs")->required();
  eval->add_option("--steps", eval_steps, "Sampling steps for conversions")
      ->check(CLI::Range(1, 1000000));
  eval->add_option("--seed", eval_seed, "Sampling seed (default: checkpoint seed)");
  eval->add_option("--out", eval_out, "Report JSON path")->required();

  std::string rep_ckpt, rep_out;
  auto* rep = app.add_subcommand("adapter-report", "Plot learned adapter layer weights");
  rep->add_option("--ckpt", rep_ckpt, "Checkpoint")->required();
  rep->add_option("--out", rep_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(speakers, utts, gen_seed, gen_out);
    if (*train) {
      ModelConfig config = resolve_config(train_opts);
      if (no_vq) config.apply_override("encoder.use_vq=false");
      if (no_adapter) config.apply_override("encoder.use_adapter=false");
      if (!condition.empty()) config.apply_override("decoder.condition=" + condition);
      if (train_steps) config.apply_override("train.steps=" + std::to_string(*train_steps));
      return cmd_train(config, train_data, train_out, loss_csv);
    }
    if (*conv) return cmd_convert(conv_ckpt, conv_src, conv_ref, conv_steps, conv_seed, conv_out);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_pairs, eval_steps, eval_seed, eval_out);
    if (*rep) return cmd_adapter_report(rep_ckpt, rep_out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
