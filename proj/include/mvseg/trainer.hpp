#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "mvseg/consistency.hpp"
#include "mvseg/metrics.hpp"
#include "mvseg/toynet.hpp"

namespace mvseg {

struct TrainConfig {
  ConsistencyMode mode = ConsistencyMode::kMono;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 10;
  /// Neighbor window grows by `curriculum_step` frames every
  /// `curriculum_every` epochs.
  std::size_t curriculum_step = 10;
  std::size_t curriculum_every = 5;
  std::size_t sequences_per_batch = 2;
  std::size_t neighbors_per_sequence = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Momentum buffers, one per parameter blob.
struct SgdState {
  std::vector<Tensor> velocity;
};

/// v <- momentum*v - lr*(g + weight_decay*w); w <- w + v. Throws
/// NonFiniteGradientError (naming the blob) on NaN/Inf gradients.
void sgd_step(ToyNetParams& params, const ToyNetParams& grads, SgdState& state,
              const TrainConfig& config);

/// Size of the neighbor window at `epoch`, capped at `sequence_length`.
std::size_t curriculum_window(std::size_t sequence_length, std::size_t epoch,
                              const TrainConfig& config);

/// Draws up to `config.neighbors_per_sequence` distinct neighbor indices
/// uniformly from the current window (indices sorted ascending).
std::vector<std::size_t> curriculum_sampler(std::size_t sequence_length, std::size_t epoch,
                                            const TrainConfig& config, std::mt19937_64& rng);

struct IterationRecord {
  std::size_t iteration = 0;
  double loss = 0;
  double learning_rate = 0;
};

using TrainLogger = std::function<void(const IterationRecord&)>;

/// One line "iter loss lr" per iteration; loss printed round-trip exact.
std::string format_log_line(const IterationRecord& rec);

/// Minibatch SGD over the sequences. Each epoch shuffles the sequence order;
/// gradients of a batch are averaged in a fixed order.
ToyNetParams train(ToyNetParams params, const std::vector<SequenceSample>& sequences,
                   const TrainConfig& config, const TrainLogger& log = {});

/// Finest-level class scores of a single frame.
Tensor predict_scores(const ToyNetParams& params, const FrameInput& frame);

struct FusedEvaluation {
  ConfusionMatrix single_view;
  ConfusionMatrix fused;
};

/// Predicts every frame of each sequence, warps neighbor scores into the
/// keyframe and fuses them by summing scores over valid views. `max_frames`
/// caps the number of fused frames including the keyframe, sampled uniformly
/// over the neighbors (0 means all).
FusedEvaluation evaluate_fused(const ToyNetParams& params,
                               const std::vector<SequenceSample>& sequences,
                               std::size_t max_frames = 0);

/// `count` indices spread uniformly over [0, n), first and last included when
/// count >= 2.
std::vector<std::size_t> uniform_sample_indices(std::size_t n, std::size_t count);

}  // namespace mvseg
