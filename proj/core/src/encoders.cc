#include "adaptvc/encoders.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "adaptvc/ops.h"

namespace adaptvc {
namespace {

void check_layers(int64_t got, int64_t expected) {
  if (got != expected) {
    throw std::invalid_argument("adapter has " + std::to_string(expected) +
                                " weights but features have " + std::to_string(got) +
                                " layers");
  }
}

Tensor one_hot(int64_t n, int64_t k) {
  Tensor w({n});
  w[k] = 1.0;
  return w;
}

Tensor gather(const Tensor& table, const std::vector<int64_t>& idx) {
  Tensor out({static_cast<int64_t>(idx.size()), table.cols()});
  for (size_t t = 0; t < idx.size(); ++t) {
    auto src = table.row(idx[t]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int64_t>(t)).begin());
  }
  return out;
}

}  // namespace

Tensor adapter_weights(const Tensor& logits) {
  if (logits.size() == 0) throw std::invalid_argument("adapter_weights: empty logits");
  Tensor w({logits.size()});
  const Scalar peak = *std::max_element(logits.values().begin(), logits.values().end());
  Scalar total = 0;
  for (int64_t i = 0; i < logits.size(); ++i) total += (w[i] = std::exp(logits[i] - peak));
  for (int64_t i = 0; i < logits.size(); ++i) w[i] /= total;
  return w;
}

Tensor adapter_combine(const LayerFeatures& feats, const Tensor& logits) {
  check_layers(feats.num_layers(), logits.size());
  const Tensor w = adapter_weights(logits);
  Tensor out = Tensor::zeros_like(feats.layers[0]);
  for (size_t l = 0; l < feats.layers.size(); ++l) {
    const Tensor& layer = feats.layers[l];
    for (int64_t i = 0; i < out.size(); ++i) out[i] += w[static_cast<int64_t>(l)] * layer[i];
  }
  return out;
}

Var adapter_combine(const std::vector<Var>& layers, Var logits) {
  check_layers(static_cast<int64_t>(layers.size()), logits.value().size());
  return ops::weighted_sum(layers, ops::softmax(logits));
}

std::vector<int64_t> nearest_codes(const Tensor& h, const Tensor& codebook) {
  if (codebook.size() == 0 || codebook.rows() == 0) {
    throw std::invalid_argument("vq_quantize: empty codebook");
  }
  if (h.cols() != codebook.cols()) {
    throw std::invalid_argument("vq_quantize: feature dim " + std::to_string(h.cols()) +
                                " does not match codebook dim " +
                                std::to_string(codebook.cols()));
  }
  if (!h.all_finite()) throw std::invalid_argument("vq_quantize: non-finite input");
  const int64_t d = h.cols();
  std::vector<int64_t> idx(static_cast<size_t>(h.rows()));
  for (int64_t t = 0; t < h.rows(); ++t) {
    const Scalar* x = h.data() + t * d;
    Scalar best = std::numeric_limits<Scalar>::infinity();
    int64_t best_k = 0;
    for (int64_t k = 0; k < codebook.rows(); ++k) {
      const Scalar* e = codebook.data() + k * d;
      Scalar dist = 0;
      for (int64_t j = 0; j < d; ++j) {
        const Scalar diff = x[j] - e[j];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_k = k;
      }
    }
    idx[static_cast<size_t>(t)] = best_k;
  }
  return idx;
}

ContentFeatures vq_quantize(const Tensor& h, const Tensor& codebook) {
  ContentFeatures out;
  out.indices = nearest_codes(h, codebook);
  out.vectors = gather(codebook, out.indices);
  return out;
}

QuantizeResult vq_quantize(Var h, Var codebook, VqFreeze* freeze) {
  Tape& tape = h.tape();
  QuantizeResult r;
  Tensor value;
  if (freeze && freeze->captured) {
    r.indices = freeze->indices;
    r.selected = freeze->selected_base;
    value = h.value();
    const Tensor current = gather(codebook.value(), r.indices);
    for (int64_t i = 0; i < value.size(); ++i) {
      value[i] += current[i] - freeze->h_base[i];
    }
  } else {
    r.indices = nearest_codes(h.value(), codebook.value());
    r.selected = gather(codebook.value(), r.indices);
    value = r.selected;
    if (freeze) {
      freeze->captured = true;
      freeze->indices = r.indices;
      freeze->h_base = h.value();
      freeze->selected_base = r.selected;
    }
  }
  const int hid = h.id(), cid = codebook.id();
  r.quantized = tape.record(
      std::move(value), {h, codebook},
      [hid, cid, idx = r.indices](Tape& t, const Tensor& g) {
        if (Tensor* gh = t.grad(hid)) *gh += g;
        if (Tensor* gc = t.grad(cid)) {
          const int64_t d = g.cols();
          for (size_t row = 0; row < idx.size(); ++row) {
            Scalar* dst = gc->data() + idx[row] * d;
            const Scalar* src = g.data() + static_cast<int64_t>(row) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
      });
  return r;
}

Var commitment_loss(Var h, const Tensor& selected) {
  if (h.shape() != selected.shape()) {
    throw std::invalid_argument("commitment_loss: shape mismatch " + shape_string(h.shape()) +
                                " vs " + shape_string(selected.shape()));
  }
  return ops::mse(h, h.tape().constant(selected));
}

ContentEncoder::ContentEncoder(const EncoderConfig& config, int num_layers, int dim,
                               ParameterStore& store)
    : config_(config), num_layers_(num_layers) {
  if (config_.codebook_size < 1) throw std::invalid_argument("codebook size must be positive");
  const std::string p = kPrefix;
  logits_ = &store.add(p + "adapter.logits", Tensor({num_layers}), config_.use_adapter);
  // Placeholder spread until init_codebook() sees data.
  Rng rng(derive_seed(static_cast<uint64_t>(num_layers) * 1000 + dim, "codebook"));
  codebook_ = &store.add(p + "vq.codebook", rng.normal_tensor({config_.codebook_size, dim}),
                         config_.use_vq);
  idle_.assign(static_cast<size_t>(config_.codebook_size), 0);
}

Tensor ContentEncoder::layer_weights() const {
  return config_.use_adapter ? adapter_weights(logits_->value) : one_hot(num_layers_, num_layers_ - 1);
}

ContentEncoder::Output ContentEncoder::forward(Tape& tape, const std::vector<Var>& layers,
                                               VqFreeze* freeze) const {
  check_layers(static_cast<int64_t>(layers.size()), num_layers_);
  Output out;
  out.h = config_.use_adapter ? adapter_combine(layers, tape.param(*logits_)) : layers.back();
  if (!config_.use_vq) {
    out.features = out.h;
    return out;
  }
  QuantizeResult q = vq_quantize(out.h, tape.param(*codebook_), freeze);
  out.features = q.quantized;
  out.indices = std::move(q.indices);
  out.commitment = commitment_loss(out.h, q.selected);
  return out;
}

ContentFeatures ContentEncoder::encode(const LayerFeatures& feats) const {
  check_layers(feats.num_layers(), num_layers_);
  Tensor h = config_.use_adapter ? adapter_combine(feats, logits_->value) : feats.layers.back();
  if (!config_.use_vq) return ContentFeatures{std::move(h), {}};
  return vq_quantize(h, codebook_->value);
}

void ContentEncoder::init_codebook(const Tensor& frames, Rng& rng) {
  if (frames.rows() == 0 || frames.cols() != codebook_->value.cols()) {
    throw std::invalid_argument("init_codebook: frames must be [N x " +
                                std::to_string(codebook_->value.cols()) + "]");
  }
  const int64_t d = frames.cols();
  for (int64_t k = 0; k < codebook_->value.rows(); ++k) {
    const int64_t src = rng.uniform_int(0, frames.rows() - 1);
    for (int64_t j = 0; j < d; ++j) {
      codebook_->value.at(k, j) = frames.at(src, j) + 0.01 * rng.normal();
    }
  }
  std::fill(idle_.begin(), idle_.end(), 0);
}

int ContentEncoder::update_usage(const std::vector<int64_t>& used, const Tensor& frames,
                                 Rng& rng) {
  std::vector<char> hit(idle_.size(), 0);
  for (int64_t i : used) hit[static_cast<size_t>(i)] = 1;
  int reseeded = 0;
  for (size_t k = 0; k < idle_.size(); ++k) {
    idle_[k] = hit[k] ? 0 : idle_[k] + 1;
    if (idle_[k] >= config_.dead_code_steps && frames.rows() > 0) {
      const int64_t src = rng.uniform_int(0, frames.rows() - 1);
      auto dst = codebook_->value.row(static_cast<int64_t>(k));
      auto row = frames.row(src);
      std::copy(row.begin(), row.end(), dst.begin());
      idle_[k] = 0;
      ++reseeded;
    }
  }
  return reseeded;
}

void ContentEncoder::set_idle_steps(std::vector<int64_t> idle) {
  if (idle.size() != idle_.size()) throw std::invalid_argument("idle counter size mismatch");
  idle_ = std::move(idle);
}

SpeakerEncoder::SpeakerEncoder(const EncoderConfig& config, int num_layers, ParameterStore& store)
    : config_(config), num_layers_(num_layers) {
  logits_ = &store.add(std::string(kPrefix) + "adapter.logits", Tensor({num_layers}),
                       config_.use_adapter);
}

Tensor SpeakerEncoder::layer_weights() const {
  return config_.use_adapter ? adapter_weights(logits_->value) : one_hot(num_layers_, 0);
}

Var SpeakerEncoder::forward(Tape& tape, const std::vector<Var>& layers, bool mean_pool) const {
  check_layers(static_cast<int64_t>(layers.size()), num_layers_);
  Var h = config_.use_adapter ? adapter_combine(layers, tape.param(*logits_)) : layers.front();
  return mean_pool ? ops::mean_rows(h) : h;
}

SpeakerFeatures SpeakerEncoder::encode(const LayerFeatures& feats, bool mean_pool) const {
  check_layers(feats.num_layers(), num_layers_);
  Tensor h = config_.use_adapter ? adapter_combine(feats, logits_->value) : feats.layers.front();
  if (!mean_pool) return {std::move(h)};
  Tensor m({1, h.cols()});
  for (int64_t t = 0; t < h.rows(); ++t) {
    for (int64_t j = 0; j < h.cols(); ++j) m.at(0, j) += h.at(t, j) / h.rows();
  }
  return {std::move(m)};
}

}  // namespace adaptvc
