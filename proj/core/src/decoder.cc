#include "adaptvc/decoder.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "adaptvc/ops.h"

namespace adaptvc {
namespace {

Tensor init_weight(Rng& rng, int64_t in, int64_t out, Scalar gain = 1.0) {
  return rng.normal_tensor({in, out}, gain / std::sqrt(static_cast<Scalar>(in)));
}

}  // namespace

std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::kCrossAttention: return "cross-attention";
    case Conditioning::kSaln: return "saln";
    case Conditioning::kMeanAdd: return "mean-add";
  }
  return "?";
}

Conditioning conditioning_from_string(const std::string& name) {
  if (name == "cross-attention") return Conditioning::kCrossAttention;
  if (name == "saln") return Conditioning::kSaln;
  if (name == "mean-add") return Conditioning::kMeanAdd;
  throw std::invalid_argument("unknown condition '" + name +
                              "' (expected cross-attention|saln|mean-add)");
}

void DecoderConfig::validate() const {
  if (mel_bins < 1 || feature_dim < 1 || hidden < 1 || levels < 0 || blocks_per_level < 1 ||
      heads < 1 || ff_mult < 1) {
    throw std::invalid_argument("decoder sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw std::invalid_argument("decoder hidden " + std::to_string(hidden) +
                                " is not divisible by heads " + std::to_string(heads));
  }
  if (time_dim < 2 || time_dim % 2 != 0) throw std::invalid_argument("time_dim must be even");
}

Scalar prior_loss_constant(int64_t frames, int64_t bins) {
  return 0.5 * static_cast<Scalar>(bins) * std::log(2.0 * std::numbers::pi) *
         static_cast<Scalar>(frames);
}

Var prior_loss(Var mu, const Tensor& x) {
  if (mu.shape() != x.shape()) {
    throw std::invalid_argument("prior_loss: shape mismatch " + shape_string(mu.shape()) +
                                " vs " + shape_string(x.shape()));
  }
  Var residual = ops::sub(mu, mu.tape().constant(x));
  return ops::add_scalar(ops::scale(ops::sum_squares(residual), 0.5),
                         prior_loss_constant(x.rows(), x.cols()));
}

Scalar prior_loss(const Tensor& mu, const Tensor& x) {
  Tape tape(false);
  return prior_loss(tape.constant(mu), x).value().item();
}

Var saln_condition(Var features, Var style, Var scale_weight, Var scale_bias, Var shift_weight,
                   Var shift_bias) {
  using namespace ops;
  if (style.rows() != 1) {
    throw std::invalid_argument("saln_condition: style must be a single pooled row, got " +
                                shape_string(style.shape()));
  }
  Var gamma = linear(style, scale_weight, scale_bias);
  Var beta = linear(style, shift_weight, shift_bias);
  return add_row(mul_row(layer_norm(features), gamma), beta);
}

Var attention(Var q, Var k, Var v, AttentionProbe* probe) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: incompatible q " + shape_string(q.shape()) + ", k " +
                                shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  const Scalar s = 1.0 / std::sqrt(static_cast<Scalar>(q.cols()));
  Var weights = ops::softmax(ops::scale(ops::matmul_nt(q, k), s), 1);
  if (probe) probe->weights.push_back(weights.value());
  return ops::matmul(weights, v);
}

PriorFusion::PriorFusion(const DecoderConfig& config, ParameterStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::string p = kPrefix;
  const int d = config_.feature_dim;
  q_ = &store.add(p + "query", init_weight(rng, d, d));
  if (config_.conditioning == Conditioning::kCrossAttention) {
    k_ = &store.add(p + "key", init_weight(rng, d, d));
    v_ = &store.add(p + "value", init_weight(rng, d, d));
  } else {
    k_ = v_ = nullptr;
    style_a_w_ = &store.add(p + "style_a.weight", init_weight(rng, d, d, 0.1));
    style_a_b_ = &store.add(p + "style_a.bias",
                            Tensor({d}, config_.conditioning == Conditioning::kSaln ? 1.0 : 0.0));
    if (config_.conditioning == Conditioning::kSaln) {
      style_b_w_ = &store.add(p + "style_b.weight", init_weight(rng, d, d, 0.1));
      style_b_b_ = &store.add(p + "style_b.bias", Tensor({d}));
    }
  }
  proj_w_ = &store.add(p + "proj.weight", init_weight(rng, d, config_.mel_bins));
  proj_b_ = &store.add(p + "proj.bias", Tensor({config_.mel_bins}));
}

Var PriorFusion::forward(Tape& tape, Var content, Var speaker, AttentionProbe* probe) const {
  using namespace ops;
  const int d = config_.feature_dim;
  if (content.cols() != d || speaker.cols() != d) {
    throw std::invalid_argument("fuse_prior: expected feature dim " + std::to_string(d) +
                                ", got content " + shape_string(content.shape()) + " and speaker " +
                                shape_string(speaker.shape()));
  }
  Var q = matmul(content, tape.param(*q_));
  Var fused;
  switch (config_.conditioning) {
    case Conditioning::kCrossAttention:
      fused = attention(q, matmul(speaker, tape.param(*k_)), matmul(speaker, tape.param(*v_)),
                        probe);
      break;
    case Conditioning::kSaln:
      fused = saln_condition(q, mean_rows(speaker), tape.param(*style_a_w_),
                             tape.param(*style_a_b_), tape.param(*style_b_w_),
                             tape.param(*style_b_b_));
      break;
    case Conditioning::kMeanAdd:
      fused = add_row(q, linear(mean_rows(speaker), tape.param(*style_a_w_),
                                tape.param(*style_a_b_)));
      break;
  }
  return linear(fused, tape.param(*proj_w_), tape.param(*proj_b_));
}

Tensor PriorFusion::fuse(const Tensor& content, const Tensor& speaker) const {
  Tape tape(false);
  return forward(tape, tape.constant(content), tape.constant(speaker)).value();
}

VectorFieldNet::Block VectorFieldNet::make_block(const std::string& name, bool skip,
                                                 ParameterStore& store, Rng& rng) {
  const int h = config_.hidden, d = config_.feature_dim, f = config_.hidden * config_.ff_mult;
  const std::string p = std::string(kPrefix) + name + ".";
  Block b;
  if (skip) {
    b.merge_w = &store.add(p + "merge.weight", init_weight(rng, 2 * h, h));
    b.merge_b = &store.add(p + "merge.bias", Tensor({h}));
  }
  b.conv_w = &store.add(p + "conv.weight", init_weight(rng, 3 * h, h, 0.5));
  b.conv_b = &store.add(p + "conv.bias", Tensor({h}));
  b.time_w = &store.add(p + "time.weight", init_weight(rng, h, h));
  b.time_b = &store.add(p + "time.bias", Tensor({h}));
  switch (config_.conditioning) {
    case Conditioning::kCrossAttention:
      b.cond_w = &store.add(p + "attn.query", init_weight(rng, h, h));
      b.cond2_w = &store.add(p + "attn.out.weight", init_weight(rng, h, h, 0.5));
      b.cond2_b = &store.add(p + "attn.out.bias", Tensor({h}));
      break;
    case Conditioning::kSaln:
      b.cond_w = &store.add(p + "saln.scale.weight", init_weight(rng, d, h, 0.1));
      b.cond_b = &store.add(p + "saln.scale.bias", Tensor({h}, 1.0));
      b.cond2_w = &store.add(p + "saln.shift.weight", init_weight(rng, d, h, 0.1));
      b.cond2_b = &store.add(p + "saln.shift.bias", Tensor({h}));
      break;
    case Conditioning::kMeanAdd:
      b.cond_w = &store.add(p + "add.weight", init_weight(rng, d, h));
      b.cond_b = &store.add(p + "add.bias", Tensor({h}));
      break;
  }
  b.ff1_w = &store.add(p + "ff1.weight", init_weight(rng, h, f));
  b.ff1_b = &store.add(p + "ff1.bias", Tensor({f}));
  b.ff2_w = &store.add(p + "ff2.weight", init_weight(rng, f, h, 0.5));
  b.ff2_b = &store.add(p + "ff2.bias", Tensor({h}));
  return b;
}

VectorFieldNet::VectorFieldNet(const DecoderConfig& config, ParameterStore& store, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::string p = kPrefix;
  const int h = config_.hidden, bins = config_.mel_bins;
  in_w_ = &store.add(p + "in.weight", init_weight(rng, 2 * bins, h));
  in_b_ = &store.add(p + "in.bias", Tensor({h}));
  t1_w_ = &store.add(p + "time1.weight", init_weight(rng, config_.time_dim, h));
  t1_b_ = &store.add(p + "time1.bias", Tensor({h}));
  t2_w_ = &store.add(p + "time2.weight", init_weight(rng, h, h));
  t2_b_ = &store.add(p + "time2.bias", Tensor({h}));
  if (config_.conditioning == Conditioning::kCrossAttention) {
    k_w_ = &store.add(p + "attn.key", init_weight(rng, config_.feature_dim, h));
    v_w_ = &store.add(p + "attn.value", init_weight(rng, config_.feature_dim, h));
  }
  for (int l = 0; l < config_.levels; ++l) {
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      down_.push_back(make_block("down" + std::to_string(l) + ".block" + std::to_string(b),
                                 false, store, rng));
    }
    down_w_.push_back(&store.add(p + "down" + std::to_string(l) + ".resample.weight",
                                 init_weight(rng, 3 * h, h)));
    down_b_.push_back(&store.add(p + "down" + std::to_string(l) + ".resample.bias", Tensor({h})));
  }
  mid_ = make_block("mid", false, store, rng);
  for (int l = config_.levels - 1; l >= 0; --l) {
    up_w_.push_back(&store.add(p + "up" + std::to_string(l) + ".resample.weight",
                               init_weight(rng, 3 * h, h)));
    up_b_.push_back(&store.add(p + "up" + std::to_string(l) + ".resample.bias", Tensor({h})));
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      up_.push_back(
          make_block("up" + std::to_string(l) + ".block" + std::to_string(b), true, store, rng));
    }
  }
  out_w_ = &store.add(p + "out.weight", init_weight(rng, h, bins, 0.1));
  out_b_ = &store.add(p + "out.bias", Tensor({bins}));
}

VectorFieldNet::Context VectorFieldNet::prepare(Tape& tape, Var h_spk) const {
  if (h_spk.cols() != config_.feature_dim) {
    throw std::invalid_argument("vector_field: speaker features have " +
                                std::to_string(h_spk.cols()) + " dims, expected " +
                                std::to_string(config_.feature_dim));
  }
  if (!h_spk.value().all_finite()) throw std::invalid_argument("vector_field: non-finite speaker features");
  Context ctx;
  if (config_.conditioning == Conditioning::kCrossAttention) {
    Var k = ops::matmul(h_spk, tape.param(*k_w_));
    Var v = ops::matmul(h_spk, tape.param(*v_w_));
    const int64_t hd = config_.hidden / config_.heads;
    for (int i = 0; i < config_.heads; ++i) {
      ctx.keys.push_back(ops::slice_cols(k, i * hd, (i + 1) * hd));
      ctx.values.push_back(ops::slice_cols(v, i * hd, (i + 1) * hd));
    }
  } else {
    ctx.style = ops::mean_rows(h_spk);
  }
  return ctx;
}

Var VectorFieldNet::run_block(Tape& tape, const Block& b, Var h, Var temb, const Context& ctx,
                              AttentionProbe* probe) const {
  using namespace ops;
  Var r = linear(im2col(layer_norm(h), 3, 1, 1, 1, Padding::kEdge), tape.param(*b.conv_w),
                 tape.param(*b.conv_b));
  r = add_row(r, linear(temb, tape.param(*b.time_w), tape.param(*b.time_b)));
  h = add(h, silu(r));

  switch (config_.conditioning) {
    case Conditioning::kCrossAttention: {
      Var q = matmul(layer_norm(h), tape.param(*b.cond_w));
      const int64_t hd = config_.hidden / config_.heads;
      std::vector<Var> heads;
      for (int i = 0; i < config_.heads; ++i) {
        heads.push_back(attention(slice_cols(q, i * hd, (i + 1) * hd),
                                  ctx.keys[static_cast<size_t>(i)],
                                  ctx.values[static_cast<size_t>(i)], probe));
      }
      Var o = heads.size() == 1 ? heads[0] : concat_cols(heads);
      h = add(h, linear(o, tape.param(*b.cond2_w), tape.param(*b.cond2_b)));
      break;
    }
    case Conditioning::kSaln:
      h = add(h, saln_condition(h, ctx.style, tape.param(*b.cond_w), tape.param(*b.cond_b),
                                tape.param(*b.cond2_w), tape.param(*b.cond2_b)));
      break;
    case Conditioning::kMeanAdd:
      h = add_row(h, linear(ctx.style, tape.param(*b.cond_w), tape.param(*b.cond_b)));
      break;
  }

  Var f = silu(linear(layer_norm(h), tape.param(*b.ff1_w), tape.param(*b.ff1_b)));
  return add(h, linear(f, tape.param(*b.ff2_w), tape.param(*b.ff2_b)));
}

Var VectorFieldNet::forward(Tape& tape, Var x_t, Scalar t, Var mu, const Context& ctx,
                            AttentionProbe* probe) const {
  using namespace ops;
  const int bins = config_.mel_bins;
  if (x_t.shape() != mu.shape() || x_t.cols() != bins || x_t.value().rank() != 2) {
    throw std::invalid_argument("vector_field: x_t " + shape_string(x_t.shape()) + " and mu " +
                                shape_string(mu.shape()) + " must both be [T x " +
                                std::to_string(bins) + "]");
  }
  if (!(t >= 0 && t <= 1)) throw std::invalid_argument("vector_field: t outside [0, 1]");
  if (!x_t.value().all_finite() || !mu.value().all_finite()) {
    throw std::invalid_argument("vector_field: non-finite input");
  }
  const int64_t frames = x_t.rows();
  const int64_t multiple = int64_t{1} << config_.levels;
  const int64_t padded = (frames + multiple - 1) / multiple * multiple;

  Var in = concat_cols({x_t, mu});
  if (padded != frames) {
    std::vector<int64_t> idx(static_cast<size_t>(padded));
    for (int64_t i = 0; i < padded; ++i) idx[static_cast<size_t>(i)] = std::min(i, frames - 1);
    in = gather_rows(in, std::move(idx));
  }
  Var h = linear(in, tape.param(*in_w_), tape.param(*in_b_));

  Var emb = tape.constant(time_embedding(Tensor({1}, t), config_.time_dim, 1000.0));
  Var temb = silu(linear(silu(linear(emb, tape.param(*t1_w_), tape.param(*t1_b_))),
                         tape.param(*t2_w_), tape.param(*t2_b_)));

  std::vector<Var> skips;
  size_t block = 0;
  for (int l = 0; l < config_.levels; ++l) {
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      h = run_block(tape, down_[block++], h, temb, ctx, probe);
      skips.push_back(h);
    }
    h = linear(im2col(h, 3, 2, 1, 0, Padding::kEdge), tape.param(*down_w_[static_cast<size_t>(l)]),
               tape.param(*down_b_[static_cast<size_t>(l)]));
  }
  h = run_block(tape, mid_, h, temb, ctx, probe);
  block = 0;
  for (int l = 0; l < config_.levels; ++l) {
    std::vector<int64_t> idx(static_cast<size_t>(2 * h.rows()));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i / 2);
    h = gather_rows(h, std::move(idx));
    h = linear(im2col(h, 3, 1, 1, 1, Padding::kEdge), tape.param(*up_w_[static_cast<size_t>(l)]),
               tape.param(*up_b_[static_cast<size_t>(l)]));
    for (int b = 0; b < config_.blocks_per_level; ++b) {
      const Block& blk = up_[block++];
      Var skip = skips.back();
      skips.pop_back();
      h = linear(concat_cols({h, skip}), tape.param(*blk.merge_w), tape.param(*blk.merge_b));
      h = run_block(tape, blk, h, temb, ctx, probe);
    }
  }
  Var out = linear(h, tape.param(*out_w_), tape.param(*out_b_));
  return padded == frames ? out : slice_rows(out, 0, frames);
}

Var VectorFieldNet::forward(Tape& tape, Var x_t, Scalar t, Var mu, Var h_spk) const {
  return forward(tape, x_t, t, mu, prepare(tape, h_spk));
}

Tensor VectorFieldNet::evaluate(const Tensor& x_t, Scalar t, const Tensor& mu,
                                const Tensor& h_spk) const {
  Tape tape(false);
  return forward(tape, tape.constant(x_t), t, tape.constant(mu), tape.constant(h_spk)).value();
}

Tensor VectorFieldNet::sample(const Tensor& mu, const Tensor& h_spk, const FlowConfig& flow,
                              Rng& rng) const {
  flow.validate();
  Tensor x0 = draw_source(mu.rows(), mu.cols(), rng, flow, &mu);

  // Speaker-side projections once, then reused by every step.
  std::vector<Tensor> keys, values;
  Tensor style;
  {
    Tape tape(false);
    Context ctx = prepare(tape, tape.constant(h_spk));
    for (const Var& k : ctx.keys) keys.push_back(k.value());
    for (const Var& v : ctx.values) values.push_back(v.value());
    if (ctx.style.valid()) style = ctx.style.value();
  }
  return euler_integrate(std::move(x0), flow.steps, [&](const Tensor& x, Scalar t) {
    Tape tape(false);
    Context ctx;
    for (const Tensor& k : keys) ctx.keys.push_back(tape.constant(k));
    for (const Tensor& v : values) ctx.values.push_back(tape.constant(v));
    if (!style.empty()) ctx.style = tape.constant(style);
    return forward(tape, tape.constant(x), t, tape.constant(mu), ctx).value();
  });
}

}  // namespace adaptvc
