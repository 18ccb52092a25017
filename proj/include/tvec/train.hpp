#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tvec/data.hpp"
#include "tvec/model.hpp"
#include "tvec/tensor.hpp"

namespace tvec {

// Multi-label binary cross-entropy, summed over the batch and the K label
// entries. Predictions are clamped to [delta, 1-delta] before the logs.
Tensor bce_loss(const Tensor& pred, const Tensor& target, double delta = 1e-7);

struct AdamConfig {
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-4;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter>& params, AdamConfig cfg);

  // m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; bias-corrected update.
  void step();

  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t batch_size = 8;   // BN
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // also checkpoint every this many epochs; 0 = final only
  std::filesystem::path checkpoint_path;  // empty = no checkpoints
  double clamp_delta = 1e-7;
  double lr = 1e-4;
  bool timing = false;  // measure wall seconds per epoch (off keeps loss.csv reproducible)

  void validate() const;
};

struct EpochStats {
  std::size_t epoch;  // 1-based
  double mean_loss;   // summed batch losses divided by utterance count
  double wall_seconds;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t steps = 0;
};

TrainResult train_loop(AnyModel& model, const DatasetManifest& manifest,
                       const std::filesystem::path& data_dir, const TrainConfig& cfg);

// CSV: epoch,mean_loss,wall_seconds
void write_loss_history(const std::filesystem::path& path, const std::vector<EpochStats>& history);

}  // namespace tvec
