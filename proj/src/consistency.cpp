#include "mvseg/consistency.hpp"

#include "mvseg/fusion.hpp"
#include "mvseg/layers.hpp"
#include "mvseg/warp_sampler.hpp"

namespace mvseg {

std::string to_string(ConsistencyMode mode) {
  switch (mode) {
    case ConsistencyMode::kMono:
      return "mono";
    case ConsistencyMode::kAugment:
      return "augment";
    case ConsistencyMode::kBayes:
      return "bayes";
    case ConsistencyMode::kMaxPool:
      return "maxpool";
  }
  return "?";
}

ConsistencyMode parse_consistency_mode(const std::string& name) {
  if (name == "mono") return ConsistencyMode::kMono;
  if (name == "augment") return ConsistencyMode::kAugment;
  if (name == "bayes") return ConsistencyMode::kBayes;
  if (name == "maxpool") return ConsistencyMode::kMaxPool;
  throw ConfigError("unknown consistency mode \"" + name + "\"");
}

std::vector<WarpGrid> neighbor_grid_pyramid(const DepthMap& key_depth, const NeighborFrame& nb,
                                            const CameraIntrinsics& k, std::size_t levels) {
  Plane<double> transformed;
  WarpGrid g = compute_warp_grid(key_depth, nb.key_to_frame, k, &transformed);
  mask_occlusions(g, transformed, nb.frame.depth);
  return downsample_grid(g, levels);
}

PreparedSample prepare_sample(const SequenceSample& sample,
                              const std::vector<std::size_t>& neighbor_indices,
                              std::size_t levels, std::mt19937_64& rng) {
  PreparedSample p;
  p.rgb.push_back(sample.keyframe.rgb);
  p.depth.push_back(depth_input(sample.keyframe.depth));
  for (std::size_t idx : neighbor_indices) {
    const NeighborFrame& nb = sample.neighbors.at(idx);
    p.rgb.push_back(nb.frame.rgb);
    p.depth.push_back(depth_input(nb.frame.depth));
    auto pyramid = neighbor_grid_pyramid(sample.keyframe.depth, nb, sample.intrinsics, levels);
    pyramid.pop_back();  // levels 0..L-1 are used
    p.grids.push_back(std::move(pyramid));
  }
  p.labels.push_back(sample.ground_truth);
  for (std::size_t l = 1; l < levels; ++l) {
    p.labels.push_back(stochastic_pool_labels(sample.ground_truth, std::size_t{1} << l, rng));
  }
  return p;
}

namespace {

bool has_labeled_overlap(const LabelMap& gt, const Mask& valid) {
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (valid.data()[i] && gt.data()[i] != kIgnoreLabel) return true;
  }
  return false;
}

}  // namespace

ConsistencyResult consistency_loss(ConsistencyMode mode, const ToyNetParams& params,
                                   const PreparedSample& sample) {
  const std::size_t L = params.config().levels();
  if (sample.labels.size() != L) throw ShapeError("label pyramid does not match network depth");
  const std::size_t frames = mode == ConsistencyMode::kMono ? 1 : sample.rgb.size();

  std::vector<ToyNetCache> caches;
  caches.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    caches.push_back(toynet_run(params, sample.rgb[f], sample.depth[f]));
  }
  std::vector<std::vector<Tensor>> d_scores(frames, std::vector<Tensor>(L));
  std::vector<std::vector<Tensor>> d_features(frames, std::vector<Tensor>(L));

  ConsistencyResult r{0.0, std::vector<double>(L, 0.0), ToyNetParams(params.config()), 0};

  for (std::size_t l = 0; l < L; ++l) {
    const LabelMap& gt = sample.labels[l];
    const Tensor& key_scores = caches[0].scores[l];
    double level_loss = 0;

    switch (mode) {
      case ConsistencyMode::kMono: {
        LossResult ce = cross_entropy_loss(key_scores, gt);
        level_loss = ce.loss;
        d_scores[0][l] = std::move(ce.grad);
        break;
      }
      case ConsistencyMode::kAugment: {
        LossResult ce = cross_entropy_loss(key_scores, gt);
        level_loss = ce.loss;
        d_scores[0][l] = std::move(ce.grad);
        for (std::size_t f = 1; f < frames; ++f) {
          const WarpGrid& grid = sample.grids[f - 1][l];
          const SampledMap warped = bilinear_sample(caches[f].scores[l], grid);
          if (!has_labeled_overlap(gt, warped.validity)) {
            ++r.skipped_terms;
            continue;
          }
          LossResult wce = cross_entropy_loss(warped.values, gt, &warped.validity);
          level_loss += wce.loss;
          d_scores[f][l] = bilinear_sample_backward(wce.grad, grid, caches[f].scores[l].shape());
        }
        break;
      }
      case ConsistencyMode::kBayes: {
        // Invalid warped pixels are zero, so a plain sum adds valid views only.
        Tensor fused = key_scores;
        for (std::size_t f = 1; f < frames; ++f) {
          const SampledMap warped = bilinear_sample(caches[f].scores[l], sample.grids[f - 1][l]);
          if (!has_labeled_overlap(gt, warped.validity)) ++r.skipped_terms;
          add_inplace(fused, warped.values);
        }
        LossResult ce = cross_entropy_loss(fused, gt);
        level_loss = ce.loss;
        for (std::size_t f = 1; f < frames; ++f) {
          d_scores[f][l] =
              bilinear_sample_backward(ce.grad, sample.grids[f - 1][l], caches[f].scores[l].shape());
        }
        d_scores[0][l] = std::move(ce.grad);
        break;
      }
      case ConsistencyMode::kMaxPool: {
        std::vector<SampledMap> views;
        views.reserve(frames);
        const Tensor& key_feat = caches[0].features[l];
        views.push_back({key_feat, Mask(key_feat.height(), key_feat.width(), 1)});
        for (std::size_t f = 1; f < frames; ++f) {
          views.push_back(bilinear_sample(caches[f].features[l], sample.grids[f - 1][l]));
          if (!has_labeled_overlap(gt, views.back().validity)) ++r.skipped_terms;
        }
        const PooledMap pooled = multiview_maxpool(views);
        const Tensor scores = classify(params, l, pooled.map.values);
        LossResult ce = cross_entropy_loss(scores, gt);
        level_loss = ce.loss;
        const Tensor d_pooled = classify_backward(params, l, pooled.map.values, ce.grad, r.grads);
        std::vector<Tensor> routed = multiview_maxpool_backward(d_pooled, pooled, frames);
        d_features[0][l] = std::move(routed[0]);
        for (std::size_t f = 1; f < frames; ++f) {
          d_features[f][l] = bilinear_sample_backward(routed[f], sample.grids[f - 1][l],
                                                      caches[f].features[l].shape());
        }
        break;
      }
    }
    r.per_level[l] = level_loss;
    r.loss += level_loss;
  }

  for (std::size_t f = 0; f < frames; ++f) {
    toynet_backward(params, caches[f], d_scores[f], d_features[f], r.grads);
  }
  return r;
}

}  // namespace mvseg
