#pragma once

#include <random>
#include <string>
#include <vector>

#include "mvseg/geometry.hpp"
#include "mvseg/toynet.hpp"

namespace mvseg {

enum class ConsistencyMode { kMono, kAugment, kBayes, kMaxPool };

std::string to_string(ConsistencyMode mode);
/// Accepts "mono", "augment", "bayes", "maxpool".
ConsistencyMode parse_consistency_mode(const std::string& name);

struct FrameInput {
  Tensor rgb;      // (3, H, W)
  DepthMap depth;  // (H, W)
};

struct NeighborFrame {
  FrameInput frame;
  /// Maps keyframe camera points into this frame's camera.
  RigidTransform key_to_frame;
};

/// One annotated keyframe and its tracked neighbors, ordered by trajectory
/// distance from the keyframe.
struct SequenceSample {
  CameraIntrinsics intrinsics;
  FrameInput keyframe;
  LabelMap ground_truth;
  std::vector<NeighborFrame> neighbors;
};

/// Network inputs, warp grids and label pyramid for one loss evaluation.
struct PreparedSample {
  std::vector<Tensor> rgb;    // frame 0 is the keyframe
  std::vector<Tensor> depth;  // network depth inputs
  /// grids[i][l]: neighbor i+1 into the keyframe at level l.
  std::vector<std::vector<WarpGrid>> grids;
  /// Ground truth per level (level 0 is full resolution).
  std::vector<LabelMap> labels;
};

/// Warp grid for every level from the keyframe depth, with occluded pixels
/// (transformed depth off the neighbor's depth by more than 2 cm) removed.
std::vector<WarpGrid> neighbor_grid_pyramid(const DepthMap& key_depth, const NeighborFrame& nb,
                                            const CameraIntrinsics& k, std::size_t levels);

/// Uses the given neighbors (indices into sample.neighbors) and draws the
/// coarse labels by stochastic pooling.
PreparedSample prepare_sample(const SequenceSample& sample,
                              const std::vector<std::size_t>& neighbor_indices,
                              std::size_t levels, std::mt19937_64& rng);

struct ConsistencyResult {
  double loss = 0;
  std::vector<double> per_level;  // summed into `loss`
  ToyNetParams grads;
  /// Neighbor terms dropped because they had no valid labeled overlap.
  std::size_t skipped_terms = 0;
};

/// Multi-scale training loss and its parameter gradient.
///
/// mono: cross-entropy of the keyframe scores at every level.
/// augment: mono plus, for each neighbor, cross-entropy of its scores warped
///   into the keyframe against the keyframe labels on valid pixels.
/// bayes: cross-entropy of keyframe scores plus the warped neighbor scores.
/// maxpool: decoder features of all views (the keyframe's own unwarped) are
///   max-pooled per level, then classified and scored.
/// Level losses are summed without weights.
ConsistencyResult consistency_loss(ConsistencyMode mode, const ToyNetParams& params,
                                   const PreparedSample& sample);

}  // namespace mvseg
