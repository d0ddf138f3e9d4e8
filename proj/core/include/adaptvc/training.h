#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adaptvc/corpus.h"
#include "adaptvc/model.h"
#include "adaptvc/optimizer.h"

namespace adaptvc {

struct LossBreakdown {
  Scalar total = 0;
  Scalar commit = 0;
  Scalar prior = 0;
  Scalar dec = 0;
};

struct TotalLoss {
  Var total;
  LossBreakdown parts;
};

// Weighted sum of the three terms. `commit` may be invalid (no VQ), in which
// case it contributes exactly 0.
TotalLoss combine_losses(Var commit, Var prior, Var dec, const LossWeights& weights);

// One utterance prepared for training: mel target and cached frozen features.
struct TrainingExample {
  const audio::AudioClip* clip = nullptr;
  audio::MelSpectrogram mel;
  LayerFeatures features;
};

TrainingExample prepare_example(const Model& model, const audio::AudioClip& clip);

struct ExampleLoss {
  TotalLoss loss;
  std::vector<int64_t> codes;
  Tensor h_content;  // pre-quantization content frames
};

// Reconstruction objective on one utterance (source = reference).
ExampleLoss total_loss(Tape& tape, const Model& model, const TrainingExample& example, Rng& rng,
                       VqFreeze* freeze = nullptr);

struct LossRecord {
  int64_t step = 0;
  LossBreakdown loss;
  Scalar grad_norm = 0;
};

class Trainer {
 public:
  Trainer(Model& model, const std::vector<audio::AudioClip>& clips);

  // Codebook rows from data frames, prior and field output biases from the
  // mean mel frame. Called once before the first step of a fresh model.
  void initialize_from_data();

  // One optimizer step on a batch. Throws NumericalError naming the step on a
  // non-finite loss or gradient.
  LossRecord step();
  void run(int steps, const std::function<void(const LossRecord&)>& on_step = {});

  int64_t step_index() const { return step_; }
  void set_step_index(int64_t step) { step_ = step; }
  Rng& rng() { return rng_; }
  const std::vector<LossRecord>& history() const { return history_; }
  const std::vector<TrainingExample>& examples() const { return examples_; }

 private:
  std::vector<size_t> next_batch();

  Model& model_;
  std::vector<TrainingExample> examples_;
  Adam adam_;
  Rng rng_;
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  int64_t step_ = 0;
  std::vector<LossRecord> history_;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& records);

struct TrainState {
  int64_t step = 0;
  std::string rng_state;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const TrainState& state = {});

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adaptvc
