#include "adaptvc/model.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "adaptvc/error.h"

namespace adaptvc {
namespace {

using nlohmann::json;

json config_tree(const ModelConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["extractor"] = {{"num_layers", c.extractor.num_layers},
                    {"dim", c.extractor.dim},
                    {"bands", c.extractor.bands},
                    {"finetune", c.extractor.finetune}};
  j["encoder"] = {{"codebook_size", c.encoder.codebook_size},
                  {"use_vq", c.encoder.use_vq},
                  {"use_adapter", c.encoder.use_adapter},
                  {"dead_code_steps", c.encoder.dead_code_steps}};
  j["decoder"] = {{"hidden", c.decoder.hidden},
                  {"levels", c.decoder.levels},
                  {"blocks_per_level", c.decoder.blocks_per_level},
                  {"heads", c.decoder.heads},
                  {"time_dim", c.decoder.time_dim},
                  {"ff_mult", c.decoder.ff_mult},
                  {"condition", to_string(c.decoder.conditioning)}};
  j["flow"] = {{"sigma_min", c.flow.sigma_min},
               {"steps", c.flow.steps},
               {"source", to_string(c.flow.source)}};
  j["train"] = {{"lr", c.optim.lr},
                {"batch_size", c.optim.batch_size},
                {"steps", c.optim.steps},
                {"clip_norm", c.optim.clip_norm},
                {"commit_weight", c.loss.commit},
                {"prior_weight", c.loss.prior},
                {"dec_weight", c.loss.dec}};
  return j;
}

void check_known(const json& given, const json& known, const std::string& path) {
  if (!given.is_object()) throw UsageError("config: '" + path + "' must be an object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw UsageError("config: unknown key '" + key + "'");
    if (known[it.key()].is_object()) check_known(it.value(), known[it.key()], key);
  }
}

template <typename T>
void read(const json& j, const char* section, const char* key, T& out) {
  try {
    j.at(section).at(key).get_to(out);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: bad value for '") + section + "." + key + "': " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() const {
  extractor.validate();
  decoder.validate();
  flow.validate();
  mel.validate();
  if (extractor.total_stride() != mel.hop) {
    throw std::invalid_argument("extractor stride " + std::to_string(extractor.total_stride()) +
                                " must equal the mel hop " + std::to_string(mel.hop));
  }
  if (decoder.feature_dim != extractor.dim || decoder.mel_bins != mel.n_mels) {
    throw std::invalid_argument("decoder dims must match extractor dim and mel bins");
  }
  if (encoder.codebook_size < 1) throw std::invalid_argument("codebook_size must be positive");
  if (!(optim.lr > 0) || optim.batch_size < 1 || optim.steps < 0 || !(optim.clip_norm > 0)) {
    throw std::invalid_argument("train: lr, batch_size and clip_norm must be positive");
  }
  if (loss.commit < 0 || loss.prior < 0 || loss.dec < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

std::string ModelConfig::to_json() const { return config_tree(*this).dump(2); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  json given;
  try {
    given = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: invalid JSON: ") + e.what());
  }
  json merged = config_tree(ModelConfig{});
  check_known(given, merged, "");
  merged.merge_patch(given);

  ModelConfig c;
  try {
    merged.at("seed").get_to(c.seed);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: bad value for 'seed': ") + e.what());
  }
  read(merged, "extractor", "num_layers", c.extractor.num_layers);
  read(merged, "extractor", "dim", c.extractor.dim);
  read(merged, "extractor", "bands", c.extractor.bands);
  read(merged, "extractor", "finetune", c.extractor.finetune);
  read(merged, "encoder", "codebook_size", c.encoder.codebook_size);
  read(merged, "encoder", "use_vq", c.encoder.use_vq);
  read(merged, "encoder", "use_adapter", c.encoder.use_adapter);
  read(merged, "encoder", "dead_code_steps", c.encoder.dead_code_steps);
  read(merged, "decoder", "hidden", c.decoder.hidden);
  read(merged, "decoder", "levels", c.decoder.levels);
  read(merged, "decoder", "blocks_per_level", c.decoder.blocks_per_level);
  read(merged, "decoder", "heads", c.decoder.heads);
  read(merged, "decoder", "time_dim", c.decoder.time_dim);
  read(merged, "decoder", "ff_mult", c.decoder.ff_mult);
  std::string condition, source;
  read(merged, "decoder", "condition", condition);
  read(merged, "flow", "sigma_min", c.flow.sigma_min);
  read(merged, "flow", "steps", c.flow.steps);
  read(merged, "flow", "source", source);
  read(merged, "train", "lr", c.optim.lr);
  read(merged, "train", "batch_size", c.optim.batch_size);
  read(merged, "train", "steps", c.optim.steps);
  read(merged, "train", "clip_norm", c.optim.clip_norm);
  read(merged, "train", "commit_weight", c.loss.commit);
  read(merged, "train", "prior_weight", c.loss.prior);
  read(merged, "train", "dec_weight", c.loss.dec);
  try {
    c.decoder.conditioning = conditioning_from_string(condition);
    c.flow.source = flow_source_from_string(source);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.extractor.seed = c.seed;
  c.decoder.feature_dim = c.extractor.dim;
  c.decoder.mel_bins = c.mel.n_mels;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

void ModelConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json tree = config_tree(*this);
  json* node = &tree;
  std::stringstream path(key);
  std::string part;
  while (std::getline(path, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw UsageError("override: unknown key '" + key + "'");
    }
    node = &(*node)[part];
  }
  if (node->is_object()) throw UsageError("override: '" + key + "' names a section, not a value");
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  *node = value;
  *this = from_json(tree.dump());
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ModelConfig::from_json(ss.str());
}

Model::Model(const ModelConfig& config) : config_(config) {
  config_.extractor.seed = config_.seed;
  config_.decoder.feature_dim = config_.extractor.dim;
  config_.decoder.mel_bins = config_.mel.n_mels;
  config_.validate();
  extractor_ = std::make_unique<FeatureExtractor>(config_.extractor, store_);
  content_ = std::make_unique<ContentEncoder>(config_.encoder, config_.extractor.num_layers,
                                              config_.extractor.dim, store_);
  speaker_ = std::make_unique<SpeakerEncoder>(config_.encoder, config_.extractor.num_layers, store_);
  Rng init(derive_seed(config_.seed, "init"));
  fusion_ = std::make_unique<PriorFusion>(config_.decoder, store_, init);
  decoder_ = std::make_unique<VectorFieldNet>(config_.decoder, store_, init);
}

bool Model::pooled_speaker() const {
  return config_.decoder.conditioning != Conditioning::kCrossAttention;
}

LayerFeatures Model::features(const audio::AudioClip& clip) const {
  return extractor_->extract(clip);
}

ContentFeatures Model::encode_content(const audio::AudioClip& clip) const {
  return content_->encode(features(clip));
}

SpeakerFeatures Model::encode_speaker(const audio::AudioClip& clip) const {
  return speaker_->encode(features(clip), pooled_speaker());
}

Tensor Model::fuse_prior(const ContentFeatures& content, const SpeakerFeatures& speaker) const {
  return fusion_->fuse(content.vectors, speaker.vectors);
}

audio::MelSpectrogram Model::convert(const audio::AudioClip& source,
                                     const audio::AudioClip& reference, int steps,
                                     Rng& rng) const {
  const SpeakerFeatures spk = encode_speaker(reference);
  const Tensor mu = fuse_prior(encode_content(source), spk);
  FlowConfig flow = config_.flow;
  flow.steps = steps;
  return {decoder_->sample(mu, spk.vectors, flow, rng)};
}

}  // namespace adaptvc
