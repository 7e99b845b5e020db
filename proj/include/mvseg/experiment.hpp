#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvseg/synthbench.hpp"
#include "mvseg/toynet.hpp"
#include "mvseg/trainer.hpp"

namespace mvseg {

/// Everything the toy training experiment needs besides the mode and seed.
struct ToyExperimentConfig {
  ToyDataConfig data{3, 32, 32, 20, 0.08, 0.4};
  ToyNetConfig net{3, 3, 1, {8, 16}, 3};
  TrainConfig train{ConsistencyMode::kMono, 1e-2, 0.9, 5e-4, 150, 10, 5, 2, 2, 0};
  std::size_t train_sequences = 10;
  std::size_t test_sequences = 8;
  /// Fused frames per keyframe at evaluation (0 = all).
  std::size_t eval_frames = 0;
  std::uint64_t data_seed = 1000;
  std::uint64_t test_seed = 5000;

  void validate() const;
};

/// "key = value" lines, '#' comments. Unknown keys are a ConfigError. Keys:
/// classes width height neighbors rgb_noise max_travel widths kernel
/// learning_rate momentum weight_decay epochs curriculum_step
/// curriculum_every sequences_per_batch neighbors_per_sequence
/// train_sequences test_sequences eval_frames data_seed test_seed
ToyExperimentConfig load_toy_config(const std::string& path);
void save_toy_config(const std::string& path, const ToyExperimentConfig& config);

struct ToyRunResult {
  ToyNetParams params;
  std::vector<IterationRecord> log;
  FusedEvaluation evaluation;
};

/// Generates train/test sequences (data seeds offset by `seed`), He-initializes
/// from `seed`, trains in `mode` and evaluates fused keyframe predictions.
ToyRunResult run_toy_experiment(const ToyExperimentConfig& config, ConsistencyMode mode,
                                std::uint64_t seed);

}  // namespace mvseg
