#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvseg/core.hpp"
#include "mvseg/warp_sampler.hpp"

namespace mvseg {

/// Per-view class map warped into the reference view. Depending on the
/// operation `scores` holds raw scores or probabilities. View 0 is the
/// keyframe.
struct ViewPrediction {
  Tensor scores;
  Mask validity;
  int view_id = 0;
};

/// Floor applied to probabilities before products in the probability path.
inline constexpr double kProbabilityFloor = 1e-12;

/// Channel softmax at every pixel, stabilized by max subtraction.
Tensor softmax(const Tensor& scores);

/// Normalized product of per-view probabilities over the views valid at each
/// pixel. Pixels where no view is valid take view 0's distribution.
Tensor bayesian_fuse_probs(std::span<const ViewPrediction> prob_views);

/// Per-pixel sum of scores over valid views (view 0 when none is valid).
Tensor sum_valid_scores(std::span<const ViewPrediction> views);

/// softmax(sum_valid_scores(views)).
Tensor bayesian_fuse_scores(std::span<const ViewPrediction> views);

/// One Bayes update: posterior proportional to likelihood * prior.
Tensor recursive_fuse(const Tensor& prior, const Tensor& likelihood);

/// Result of max-pooling across views. `argmax` has one entry per tensor
/// element; -1 where no view is valid at that pixel.
struct PooledMap {
  SampledMap map;
  std::vector<std::int32_t> argmax;
};

/// Elementwise max over the views valid at each pixel. Ties go to the lowest
/// view index. Validity is the OR of view validities.
PooledMap multiview_maxpool(std::span<const SampledMap> views);

/// Routes `grad` to the winning view of every element.
std::vector<Tensor> multiview_maxpool_backward(const Tensor& grad, const PooledMap& pooled,
                                               std::size_t num_views);

enum class FusionMethod { kBayes, kBayesProb, kMaxPool };

/// Accepts "bayes", "bayes-prob", "maxpool".
FusionMethod parse_fusion_method(const std::string& name);
std::string to_string(FusionMethod method);

/// Fuses warped score maps (view 0 is the keyframe). Returns summed scores
/// for kBayes, normalized fused probabilities for kBayesProb (views are
/// softmaxed first) and max-pooled scores for kMaxPool. The argmax of the
/// result is the fused labeling in every case.
Tensor fuse_views(FusionMethod method, std::span<const ViewPrediction> views);

}  // namespace mvseg
