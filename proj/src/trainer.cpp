#include "mvseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "mvseg/fusion.hpp"
#include "mvseg/warp_sampler.hpp"

namespace mvseg {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight decay must be non-negative");
  if (sequences_per_batch == 0) throw ConfigError("batch needs at least one sequence");
  if (curriculum_every == 0) throw ConfigError("curriculum period must be positive");
}

void sgd_step(ToyNetParams& params, const ToyNetParams& grads, SgdState& state,
              const TrainConfig& config) {
  if (grads.blob_count() != params.blob_count()) throw ShapeError("gradient layout mismatch");
  for (std::size_t i = 0; i < grads.blob_count(); ++i) {
    if (!grads.blob(i).all_finite()) {
      throw NonFiniteGradientError("non-finite gradient in blob " + grads.name(i));
    }
  }
  if (state.velocity.empty()) {
    for (std::size_t i = 0; i < params.blob_count(); ++i) {
      state.velocity.emplace_back(params.blob(i).shape(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.blob_count(); ++i) {
    auto w = params.blob(i).data();
    auto v = state.velocity[i].data();
    const auto g = grads.blob(i).data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = config.momentum * v[j] - config.learning_rate * (g[j] + config.weight_decay * w[j]);
      w[j] += v[j];
    }
  }
}

std::size_t curriculum_window(std::size_t sequence_length, std::size_t epoch,
                              const TrainConfig& config) {
  const std::size_t window = config.curriculum_step * (1 + epoch / config.curriculum_every);
  return std::min(window, sequence_length);
}

std::vector<std::size_t> curriculum_sampler(std::size_t sequence_length, std::size_t epoch,
                                            const TrainConfig& config, std::mt19937_64& rng) {
  if (sequence_length == 0) throw DegenerateSampleError("sequence has no neighbor frames");
  const std::size_t window = curriculum_window(sequence_length, epoch, config);
  std::vector<std::size_t> pool(window);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t take = std::min(config.neighbors_per_sequence, window);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, window - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::string format_log_line(const IterationRecord& rec) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu %.17g %.17g", rec.iteration, rec.loss, rec.learning_rate);
  return buf;
}

ToyNetParams train(ToyNetParams params, const std::vector<SequenceSample>& sequences,
                   const TrainConfig& config, const TrainLogger& log) {
  config.validate();
  if (sequences.empty()) throw DegenerateSampleError("no training sequences");
  std::mt19937_64 rng(config.seed);
  SgdState state;
  const std::size_t levels = params.config().levels();
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t iteration = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.sequences_per_batch) {
      const std::size_t end = std::min(order.size(), start + config.sequences_per_batch);
      ToyNetParams batch_grads(params.config());
      double batch_loss = 0;
      for (std::size_t b = start; b < end; ++b) {
        const SequenceSample& seq = sequences[order[b]];
        std::vector<std::size_t> picked;
        if (config.mode != ConsistencyMode::kMono && !seq.neighbors.empty()) {
          picked = curriculum_sampler(seq.neighbors.size(), epoch, config, rng);
        }
        const PreparedSample prepared = prepare_sample(seq, picked, levels, rng);
        ConsistencyResult r = consistency_loss(config.mode, params, prepared);
        batch_loss += r.loss;
        batch_grads.axpy(1.0, r.grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      ToyNetParams mean_grads(params.config());
      mean_grads.axpy(scale, batch_grads);
      sgd_step(params, mean_grads, state, config);
      if (log) log({iteration, batch_loss * scale, config.learning_rate});
      ++iteration;
    }
  }
  return params;
}

Tensor predict_scores(const ToyNetParams& params, const FrameInput& frame) {
  ToyNetCache c = toynet_run(params, frame.rgb, depth_input(frame.depth));
  return std::move(c.scores[0]);
}

std::vector<std::size_t> uniform_sample_indices(std::size_t n, std::size_t count) {
  std::vector<std::size_t> out;
  if (n == 0 || count == 0) return out;
  if (count >= n) {
    out.resize(n);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                     static_cast<double>(count - 1))));
  }
  return out;
}

FusedEvaluation evaluate_fused(const ToyNetParams& params,
                               const std::vector<SequenceSample>& sequences,
                               std::size_t max_frames) {
  const std::size_t k = params.config().num_classes;
  FusedEvaluation ev{ConfusionMatrix(k), ConfusionMatrix(k)};
  for (const SequenceSample& seq : sequences) {
    const Tensor key_scores = predict_scores(params, seq.keyframe);
    const std::size_t h = key_scores.height();
    const std::size_t w = key_scores.width();
    std::vector<ViewPrediction> views;
    views.push_back({key_scores, Mask(h, w, 1), 0});
    const std::size_t neighbor_budget =
        max_frames == 0 ? seq.neighbors.size() : std::min(seq.neighbors.size(), max_frames - 1);
    for (std::size_t idx : uniform_sample_indices(seq.neighbors.size(), neighbor_budget)) {
      const NeighborFrame& nb = seq.neighbors[idx];
      const WarpGrid grid = neighbor_grid_pyramid(seq.keyframe.depth, nb, seq.intrinsics, 0)[0];
      SampledMap warped = bilinear_sample(predict_scores(params, nb.frame), grid);
      views.push_back({std::move(warped.values), std::move(warped.validity),
                       static_cast<int>(idx + 1)});
    }
    ev.single_view.accumulate(argmax_labels(key_scores), seq.ground_truth);
    ev.fused.accumulate(argmax_labels(sum_valid_scores(views)), seq.ground_truth);
  }
  return ev;
}

}  // namespace mvseg
