#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvseg/core.hpp"

namespace mvseg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. Integer pixel coordinates are sample centers.
struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  /// Throws ConfigError when focal lengths are not positive or the principal
  /// point lies outside the image.
  void validate() const;
};

/// Plain text: "fx fy cx cy width height".
CameraIntrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const CameraIntrinsics& k);

/// SE(3) element acting as p -> R p + t.
class RigidTransform {
 public:
  RigidTransform() = default;
  /// Throws ConfigError unless rotation is orthonormal with det +1 (1e-9).
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  /// Unit quaternion (qx, qy, qz, qw); renormalized before use.
  static RigidTransform from_quaternion(double qx, double qy, double qz, double qw,
                                        const Vec3& translation);
  static RigidTransform from_axis_angle(const Vec3& axis, double angle, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 operator()(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Composition: (a * b)(p) == a(b(p)).
  RigidTransform operator*(const RigidTransform& b) const;
  RigidTransform inverse() const;

  bool is_near(const RigidTransform& other, double tol) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
inline RigidTransform invert(const RigidTransform& a) { return a.inverse(); }

/// Depth in meters. Zero or non-finite means missing.
using DepthMap = Plane<double>;

inline constexpr double kMaxValidDepth = 100.0;
inline bool is_valid_depth(double z) { return std::isfinite(z) && z > 0.0 && z < kMaxValidDepth; }

/// Target-indexed normalized source coordinates. Pixel center x of an image
/// with W columns maps to u = (2x + 1)/W - 1, so the image border maps to +-1
/// and 2x2 averaging of a fine grid reproduces the coarse pixel lattice.
struct WarpGrid {
  Plane<double> u;
  Plane<double> v;
  Mask valid;
  /// Width/height of the source image the coordinates refer to.
  std::size_t source_width = 0;
  std::size_t source_height = 0;

  std::size_t height() const { return valid.height(); }
  std::size_t width() const { return valid.width(); }
};

/// Pinhole back-projection of pixel `x` at depth `z`. z <= 0 throws
/// InvalidDepthError.
Vec3 backproject(const Vec2& x, double z, const CameraIntrinsics& k);

/// Pinhole projection. Returns nullopt for points at or behind the camera.
std::optional<Vec2> project(const Vec3& p, const CameraIntrinsics& k);

double normalize_coord(double pixel, std::size_t extent);
double denormalize_coord(double normalized, std::size_t extent);

/// Identity grid for an image of the given size.
WarpGrid identity_grid(std::size_t height, std::size_t width);

/// Grid mapping every target pixel into the source view:
/// x -> project(T * backproject(x, depth_target(x))). Pixels with missing
/// depth, points behind the source camera, or projections outside
/// [0, W-1] x [0, H-1] are invalid. If `source_depth_out` is given it receives
/// the z coordinate of each transformed point in the source frame (0 where
/// invalid), which feeds occlusion checks.
WarpGrid compute_warp_grid(const DepthMap& depth_target, const RigidTransform& pose_target_to_source,
                           const CameraIntrinsics& k, Plane<double>* source_depth_out = nullptr);

/// Invalidates grid entries whose transformed depth disagrees with the
/// source depth at the nearest source pixel by more than `tolerance` meters.
void mask_occlusions(WarpGrid& grid, const Plane<double>& transformed_depth,
                     const DepthMap& source_depth, double tolerance = 0.02);

/// Levels 0..`levels`; level l has shape (H/2^l, W/2^l). Coordinates are 2x2
/// block means, a coarse cell is valid only if all four members are.
std::vector<WarpGrid> downsample_grid(const WarpGrid& g, std::size_t levels);

}  // namespace mvseg
