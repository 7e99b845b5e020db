#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvseg/core.hpp"
#include "mvseg/geometry.hpp"

namespace mvseg {

// Images are binary Netpbm files. 16-bit samples are big-endian as the
// format prescribes.

/// 16-bit PGM, millimeters, 0 = missing.
DepthMap load_depth(const std::string& path);
/// Depth is rounded to whole millimeters; missing or out-of-range depth is 0.
void save_depth(const std::string& path, const DepthMap& depth);

/// 8-bit PGM; 255 is kIgnoreLabel.
LabelMap load_labels(const std::string& path);
void save_labels(const std::string& path, const LabelMap& labels);

/// 8-bit binary PPM scaled to [0, 1], returned as (3, H, W).
Tensor load_rgb(const std::string& path);
/// Values are clamped to [0, 1] and quantized to 1/255.
void save_rgb(const std::string& path, const Tensor& rgb);

/// 8-bit PGM with 255 for valid pixels and 0 elsewhere.
void save_mask(const std::string& path, const Mask& mask);
Mask load_mask(const std::string& path);

struct TrajectoryEntry {
  double timestamp = 0;
  Vec3 translation = Vec3::Zero();
  /// (qx, qy, qz, qw), unit norm.
  Eigen::Vector4d rotation{0, 0, 0, 1};

  /// Camera-to-world transform.
  RigidTransform pose() const;
};

using Trajectory = std::vector<TrajectoryEntry>;

inline constexpr double kAssociationTolerance = 0.02;

/// TUM-style text, one "timestamp tx ty tz qx qy qz qw" per line; '#' starts
/// a comment. Quaternions are renormalized; timestamps must strictly increase.
Trajectory load_trajectory(const std::string& path);
void save_trajectory(const std::string& path, const Trajectory& traj);

/// Entry nearest to `timestamp`; AssociationError beyond `tolerance` seconds.
const TrajectoryEntry& find_entry(const Trajectory& traj, double timestamp,
                                  double tolerance = kAssociationTolerance);

/// Maps points from the camera at `t_from` into the camera at `t_to`:
/// inverse(pose_to) * pose_from.
RigidTransform relative_pose(const Trajectory& traj, double t_from, double t_to);

struct FrameRecord {
  int id = 0;
  double timestamp = 0;
  std::string rgb;
  std::string depth;
  std::optional<std::string> label;
  /// Optional MVFT score map predicted for this frame.
  std::optional<std::string> scores;
};

/// Key-value sequence description. Paths are stored resolved against the
/// manifest's directory.
struct SequenceManifest {
  std::string intrinsics;
  std::string trajectory;
  int keyframe = 0;
  /// Keyframe first, then neighbors ordered by trajectory distance.
  std::vector<FrameRecord> frames;

  const FrameRecord& frame(int id) const;
  const FrameRecord& keyframe_record() const { return frame(keyframe); }
  std::vector<const FrameRecord*> neighbors() const;
};

SequenceManifest load_manifest(const std::string& path);
/// Writes paths relative to the manifest's directory when they lie below it.
void save_manifest(const std::string& path, const SequenceManifest& manifest);

}  // namespace mvseg
