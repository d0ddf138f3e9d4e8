#include "adaptvc/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "adaptvc/error.h"
#include "adaptvc/ops.h"

namespace adaptvc {

TotalLoss combine_losses(Var commit, Var prior, Var dec, const LossWeights& weights) {
  TotalLoss out;
  out.parts.prior = prior.value().item();
  out.parts.dec = dec.value().item();
  Var total = ops::add(ops::scale(prior, weights.prior), ops::scale(dec, weights.dec));
  if (commit.valid()) {
    out.parts.commit = commit.value().item();
    total = ops::add(total, ops::scale(commit, weights.commit));
  }
  out.total = total;
  out.parts.total = total.value().item();
  return out;
}

TrainingExample prepare_example(const Model& model, const audio::AudioClip& clip) {
  TrainingExample ex;
  ex.clip = &clip;
  ex.mel = audio::mel_spectrogram(clip, model.config().mel);
  if (!model.config().extractor.finetune) ex.features = model.features(clip);
  return ex;
}

ExampleLoss total_loss(Tape& tape, const Model& model, const TrainingExample& example, Rng& rng,
                       VqFreeze* freeze) {
  std::vector<Var> layers;
  if (model.config().extractor.finetune) {
    layers = model.extractor().forward(tape, *example.clip);
  } else {
    for (const Tensor& l : example.features.layers) layers.push_back(tape.constant(l));
  }
  ContentEncoder::Output content = model.content_encoder().forward(tape, layers, freeze);
  Var spk = model.speaker_encoder().forward(tape, layers, model.pooled_speaker());
  Var mu = model.fusion().forward(tape, content.features, spk);
  Var prior = prior_loss(mu, example.mel.frames);

  const VectorFieldNet& decoder = model.decoder();
  const VectorFieldNet::Context ctx = decoder.prepare(tape, spk);
  TapeField field = [&](Tape& t, Var x, const Tensor& times) {
    return decoder.forward(t, x, times[0], mu, ctx);
  };
  CfmOptions opts;
  opts.source_mean = &mu.value();
  Var dec = cfm_loss(tape, example.mel.frames, field, rng, model.config().flow, opts);

  ExampleLoss out;
  out.loss = combine_losses(content.commitment, prior, dec, model.config().loss);
  out.codes = std::move(content.indices);
  out.h_content = content.h.value();
  return out;
}

namespace {

AdamConfig adam_config(const ModelConfig& c) {
  AdamConfig a;
  a.learning_rate = c.optim.lr;
  a.clip_norm = c.optim.clip_norm;
  return a;
}

}  // namespace

Trainer::Trainer(Model& model, const std::vector<audio::AudioClip>& clips)
    : model_(model),
      adam_(model.params(), adam_config(model.config())),
      rng_(derive_seed(model.config().seed, "training")) {
  if (clips.empty()) throw DataError("training corpus is empty");
  examples_.reserve(clips.size());
  for (const auto& clip : clips) examples_.push_back(prepare_example(model_, clip));
  order_.resize(examples_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();
}

void Trainer::initialize_from_data() {
  const Tensor weights = model_.content_encoder().layer_weights();
  int64_t frames = 0;
  for (const auto& ex : examples_) frames += ex.mel.num_frames();
  const int64_t dim = model_.config().extractor.dim, bins = model_.config().mel.n_mels;
  Tensor h({frames, dim});
  Tensor mean_mel({bins});
  int64_t row = 0;
  for (const auto& ex : examples_) {
    const LayerFeatures feats = ex.features.layers.empty() ? model_.features(*ex.clip) : ex.features;
    for (int64_t t = 0; t < feats.num_frames(); ++t, ++row) {
      for (int64_t j = 0; j < dim; ++j) {
        Scalar v = 0;
        for (int64_t l = 0; l < feats.num_layers(); ++l) {
          v += weights[l] * feats.layers[static_cast<size_t>(l)].at(t, j);
        }
        h.at(row, j) = v;
      }
      for (int64_t m = 0; m < bins; ++m) mean_mel[m] += ex.mel.frames.at(t, m) / frames;
    }
  }
  Rng rng(derive_seed(model_.config().seed, "codebook-init"));
  model_.content_encoder().init_codebook(h, rng);
  model_.params().get("fusion.proj.bias").value = mean_mel;
  if (model_.config().flow.source == FlowSource::kStandard) {
    model_.params().get("decoder.out.bias").value = mean_mel;
  }
}

std::vector<size_t> Trainer::next_batch() {
  const size_t batch = std::min<size_t>(static_cast<size_t>(model_.config().optim.batch_size),
                                        order_.size());
  std::vector<size_t> out;
  while (out.size() < batch) {
    if (cursor_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_.engine());
      cursor_ = 0;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

LossRecord Trainer::step() {
  const std::vector<size_t> batch = next_batch();
  model_.params().zero_grad();
  LossRecord rec;
  rec.step = step_;
  std::vector<int64_t> codes;
  std::vector<Tensor> h_frames;
  const Scalar inv = 1.0 / static_cast<Scalar>(batch.size());
  for (size_t idx : batch) {
    Tape tape;
    ExampleLoss el = total_loss(tape, model_, examples_[idx], rng_);
    if (!std::isfinite(el.loss.parts.total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(step_));
    }
    tape.backward(ops::scale(el.loss.total, inv));
    rec.loss.total += el.loss.parts.total * inv;
    rec.loss.commit += el.loss.parts.commit * inv;
    rec.loss.prior += el.loss.parts.prior * inv;
    rec.loss.dec += el.loss.parts.dec * inv;
    codes.insert(codes.end(), el.codes.begin(), el.codes.end());
    h_frames.push_back(std::move(el.h_content));
  }
  try {
    rec.grad_norm = adam_.step();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step_));
  }
  if (model_.config().encoder.use_vq) {
    int64_t rows = 0;
    for (const Tensor& t : h_frames) rows += t.rows();
    Tensor frames({rows, model_.config().extractor.dim});
    int64_t r = 0;
    for (const Tensor& t : h_frames) {
      std::copy(t.values().begin(), t.values().end(), frames.data() + r * frames.cols());
      r += t.rows();
    }
    model_.content_encoder().update_usage(codes, frames, rng_);
  }
  ++step_;
  history_.push_back(rec);
  return rec;
}

void Trainer::run(int steps, const std::function<void(const LossRecord&)>& on_step) {
  for (int i = 0; i < steps; ++i) {
    const LossRecord rec = step();
    if (on_step) on_step(rec);
  }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss log " + path.string());
  out << "step,total,commit,prior,dec\n";
  char line[160];
  for (const LossRecord& r : records) {
    std::snprintf(line, sizeof line, "%lld,%.10g,%.10g,%.10g,%.10g\n",
                  static_cast<long long>(r.step), r.loss.total, r.loss.commit, r.loss.prior,
                  r.loss.dec);
    out << line;
  }
  if (!out) throw DataError("failed writing loss log " + path.string());
}

}  // namespace adaptvc
