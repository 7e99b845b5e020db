#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mvseg/consistency.hpp"
#include "mvseg/fusion.hpp"
#include "mvseg/geometry.hpp"
#include "mvseg/metrics.hpp"

namespace mvseg {

// Synthetic RGB-D world built from axis-aligned primitives. World axes follow
// the camera convention: x right, y down, z forward.

struct AxisBox {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  Label label = 0;
};

/// Room seen from inside. Faces carry their own class.
struct Room {
  Vec3 lo{-2.5, -1.5, -1.5};
  Vec3 hi{2.5, 1.2, 4.5};
  Label floor_label = 1;    // y = hi.y
  Label ceiling_label = 0;  // y = lo.y
  Label wall_label = 0;
};

struct SceneSpec {
  std::size_t num_classes = 2;
  std::optional<Room> room;
  /// Boxes; a zero extent along one axis makes a flat rectangle.
  std::vector<AxisBox> boxes;
  /// Class of rays that hit nothing (their depth is missing).
  Label background = 0;

  void validate() const;
};

/// Text scene file, one directive per line ('#' comments):
///   classes K
///   room xmin ymin zmin xmax ymax zmax floor ceiling wall
///   box xmin ymin zmin xmax ymax zmax label
///   rect x|y|z coord a0 a1 b0 b1 label   (plane at axis=coord spanning the
///                                          other two axes in order)
///   background label
SceneSpec load_scene(const std::string& path);
void save_scene(const std::string& path, const SceneSpec& scene);

/// Room plus a few random boxes in front of the origin.
SceneSpec random_scene(std::size_t num_classes, std::mt19937_64& rng);

struct RayHit {
  double t = 0;  // distance along the ray direction
  Label label = 0;
  Vec3 point = Vec3::Zero();
  bool hit = false;
};

/// Nearest intersection along origin + t*dir, t > 0.
RayHit cast_ray(const SceneSpec& scene, const Vec3& origin, const Vec3& dir);

struct RenderResult {
  DepthMap depth;
  LabelMap labels;
  Tensor rgb;  // (3, H, W) in [0, 1], textured per class
};

/// `camera_to_world` places the camera. Depth is the camera-frame z of the
/// nearest hit.
RenderResult render(const SceneSpec& scene, const RigidTransform& camera_to_world,
                    const CameraIntrinsics& k);

/// Exact depth at a sub-pixel location; 0 when the ray misses.
double render_depth_at(const SceneSpec& scene, const RigidTransform& camera_to_world,
                       const CameraIntrinsics& k, double px, double py);

struct OracleWarp {
  LabelMap labels;
  Mask valid;
};

/// Brute-force reference warp: for each target pixel, back-project with the
/// target depth, transform, project, and look up the nearest source pixel.
/// Pixels without depth, behind the camera, outside the source image, or
/// whose transformed depth is more than `occlusion_tolerance` off the source
/// depth are invalid.
OracleWarp oracle_warp(const LabelMap& source_labels, const DepthMap& source_depth,
                       const DepthMap& target_depth, const RigidTransform& pose_target_to_source,
                       const CameraIntrinsics& k, double occlusion_tolerance = 0.02);

struct NoiseModel {
  /// Score advantage of the predicted class.
  double margin = 4.0;
  /// Std-dev of Gaussian noise added to every score.
  double logit_sigma = 0.0;
  /// Probability that a pixel is predicted as a uniformly drawn wrong class.
  double misclassification_rate = 0.0;
  /// Pixels within this Chebyshev radius of a label boundary take the
  /// neighboring label with probability 1/2.
  std::size_t boundary_radius = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Noisy score map of a segmentation whose truth is `gt`.
Tensor simulate_predictions(const LabelMap& gt, std::size_t num_classes, const NoiseModel& noise,
                            std::mt19937_64& rng);

/// Deterministic per-view generator derived from the noise seed.
std::mt19937_64 view_rng(const NoiseModel& noise, std::size_t view);

enum class TrajectoryKind { kArc, kLine, kOrbit };
TrajectoryKind parse_trajectory_kind(const std::string& name);

struct PosedTrajectory {
  std::vector<RigidTransform> poses;  // camera to world
  std::vector<double> timestamps;
  std::size_t keyframe = 0;
};

/// Camera path looking at `target`; the keyframe is the middle frame.
/// `extent` is the total lateral travel (line/arc, meters) or the orbit
/// radius.
PosedTrajectory make_trajectory(TrajectoryKind kind, std::size_t frames, const Vec3& target,
                                double extent);

RigidTransform look_at(const Vec3& eye, const Vec3& target);

/// fx = fy = 0.82 W, principal point at the image center.
CameraIntrinsics default_intrinsics(std::size_t width, std::size_t height);

struct BenchmarkReport {
  ConfusionMatrix single_view;
  ConfusionMatrix fused;
  std::size_t frames_used = 0;

  MetricSummary single() const { return summarize(single_view); }
  MetricSummary fused_summary() const { return summarize(fused); }
};

/// Renders the keyframe ground truth, simulates predictions for the keyframe
/// and `frames - 1` other frames sampled uniformly over the trajectory,
/// warps them into the keyframe (with occlusion masking) and fuses them.
BenchmarkReport run_fusion_benchmark(const SceneSpec& scene, const PosedTrajectory& trajectory,
                                     const CameraIntrinsics& k, const NoiseModel& noise,
                                     std::size_t frames, FusionMethod method);

struct ToyDataConfig {
  std::size_t num_classes = 3;
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t neighbors = 8;
  /// Std-dev of per-pixel RGB sensor noise.
  double rgb_noise = 0.08;
  /// Max camera travel between keyframe and farthest neighbor (meters).
  double max_travel = 0.3;
};

/// Random scenes rendered into keyframe + neighbor sequences for training.
std::vector<SequenceSample> make_toy_sequences(std::size_t count, const ToyDataConfig& config,
                                               std::uint64_t seed);

}  // namespace mvseg
