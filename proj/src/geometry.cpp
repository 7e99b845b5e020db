#include "mvseg/geometry.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/LU>

namespace mvseg {

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw ConfigError("focal lengths must be positive");
  if (width == 0 || height == 0) throw ConfigError("image size must be positive");
  if (!(cx >= 0 && cx < static_cast<double>(width)) ||
      !(cy >= 0 && cy < static_cast<double>(height))) {
    throw ConfigError("principal point outside the image");
  }
}

CameraIntrinsics load_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::istringstream ls(line);
  CameraIntrinsics k;
  if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw FormatError(path + ":1: expected \"fx fy cx cy width height\"");
  }
  k.validate();
  return k;
}

void save_intrinsics(const std::string& path, const CameraIntrinsics& k) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.precision(17);
  out << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' ' << k.height
      << '\n';
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho_err = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho_err <= 1e-9) || std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ConfigError("rotation is not orthonormal with determinant +1");
  }
  if (!translation.allFinite()) throw ConfigError("non-finite translation");
}

RigidTransform RigidTransform::from_quaternion(double qx, double qy, double qz, double qw,
                                               const Vec3& translation) {
  Eigen::Quaterniond q(qw, qx, qy, qz);
  const double n = q.norm();
  if (!(n > 0) || !std::isfinite(n)) throw ConfigError("degenerate quaternion");
  q.normalize();
  return RigidTransform(q.toRotationMatrix(), translation);
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle,
                                               const Vec3& translation) {
  if (axis.norm() == 0) return RigidTransform(Mat3::Identity(), translation);
  return RigidTransform(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(),
                        translation);
}

RigidTransform RigidTransform::operator*(const RigidTransform& b) const {
  RigidTransform out;
  out.rotation_ = rotation_ * b.rotation_;
  out.translation_ = rotation_ * b.translation_ + translation_;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

bool RigidTransform::is_near(const RigidTransform& other, double tol) const {
  return (rotation_ - other.rotation_).cwiseAbs().maxCoeff() <= tol &&
         (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
}

Vec3 backproject(const Vec2& x, double z, const CameraIntrinsics& k) {
  if (!(z > 0)) throw InvalidDepthError("back-projection needs positive depth");
  return {z * (x.x() - k.cx) / k.fx, z * (x.y() - k.cy) / k.fy, z};
}

std::optional<Vec2> project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0)) return std::nullopt;
  return Vec2{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

double normalize_coord(double pixel, std::size_t extent) {
  return (2.0 * pixel + 1.0) / static_cast<double>(extent) - 1.0;
}

double denormalize_coord(double normalized, std::size_t extent) {
  return ((normalized + 1.0) * static_cast<double>(extent) - 1.0) * 0.5;
}

WarpGrid identity_grid(std::size_t height, std::size_t width) {
  WarpGrid g{Plane<double>(height, width), Plane<double>(height, width), Mask(height, width, 1),
             width, height};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      g.u(y, x) = normalize_coord(static_cast<double>(x), width);
      g.v(y, x) = normalize_coord(static_cast<double>(y), height);
    }
  }
  return g;
}

WarpGrid compute_warp_grid(const DepthMap& depth_target, const RigidTransform& pose_target_to_source,
                           const CameraIntrinsics& k, Plane<double>* source_depth_out) {
  k.validate();
  if (!depth_target.same_size(k.height, k.width)) {
    throw ShapeError("depth map is " + std::to_string(depth_target.height()) + "x" +
                     std::to_string(depth_target.width()) + " but intrinsics describe " +
                     std::to_string(k.height) + "x" + std::to_string(k.width));
  }
  const std::size_t h = k.height;
  const std::size_t w = k.width;
  WarpGrid g{Plane<double>(h, w), Plane<double>(h, w), Mask(h, w, 0), w, h};
  if (source_depth_out != nullptr) *source_depth_out = Plane<double>(h, w, 0.0);
  const double max_x = static_cast<double>(w - 1);
  const double max_y = static_cast<double>(h - 1);

  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double z = depth_target(y, x);
      if (!is_valid_depth(z)) continue;
      const Vec3 p = pose_target_to_source(
          backproject({static_cast<double>(x), static_cast<double>(y)}, z, k));
      const auto px = project(p, k);
      if (!px) continue;
      // Round-off must not push border pixels outside the image.
      constexpr double kEdge = 1e-9;
      if (!(px->x() >= -kEdge && px->x() <= max_x + kEdge && px->y() >= -kEdge && px->y() <= max_y + kEdge)) {
        continue;
      }
      g.u(y, x) = normalize_coord(std::clamp(px->x(), 0.0, max_x), w);
      g.v(y, x) = normalize_coord(std::clamp(px->y(), 0.0, max_y), h);
      g.valid(y, x) = 1;
      if (source_depth_out != nullptr) (*source_depth_out)(y, x) = p.z();
    }
  }
  return g;
}

void mask_occlusions(WarpGrid& grid, const Plane<double>& transformed_depth,
                     const DepthMap& source_depth, double tolerance) {
  if (!transformed_depth.same_size(grid.height(), grid.width()) ||
      !source_depth.same_size(grid.source_height, grid.source_width)) {
    throw ShapeError("occlusion check inputs disagree with the grid");
  }
  for (std::size_t y = 0; y < grid.height(); ++y) {
    for (std::size_t x = 0; x < grid.width(); ++x) {
      if (!grid.valid(y, x)) continue;
      const double sx = std::round(denormalize_coord(grid.u(y, x), grid.source_width));
      const double sy = std::round(denormalize_coord(grid.v(y, x), grid.source_height));
      const double zs = source_depth(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      if (!is_valid_depth(zs) || std::abs(zs - transformed_depth(y, x)) > tolerance) {
        grid.valid(y, x) = 0;
      }
    }
  }
}

std::vector<WarpGrid> downsample_grid(const WarpGrid& g, std::size_t levels) {
  const std::size_t factor = std::size_t{1} << levels;
  if (g.height() % factor != 0 || g.width() % factor != 0 || g.source_height % factor != 0 ||
      g.source_width % factor != 0) {
    throw ShapeError("grid of size " + std::to_string(g.height()) + "x" +
                     std::to_string(g.width()) + " is not divisible by 2^" +
                     std::to_string(levels));
  }
  std::vector<WarpGrid> out;
  out.reserve(levels + 1);
  out.push_back(g);
  for (std::size_t l = 1; l <= levels; ++l) {
    const WarpGrid& f = out.back();
    const std::size_t h = f.height() / 2;
    const std::size_t w = f.width() / 2;
    WarpGrid c{Plane<double>(h, w), Plane<double>(h, w), Mask(h, w, 0), f.source_width / 2,
               f.source_height / 2};
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t y0 = 2 * y;
        const std::size_t x0 = 2 * x;
        c.u(y, x) = 0.25 * (f.u(y0, x0) + f.u(y0, x0 + 1) + f.u(y0 + 1, x0) + f.u(y0 + 1, x0 + 1));
        c.v(y, x) = 0.25 * (f.v(y0, x0) + f.v(y0, x0 + 1) + f.v(y0 + 1, x0) + f.v(y0 + 1, x0 + 1));
        c.valid(y, x) = (f.valid(y0, x0) && f.valid(y0, x0 + 1) && f.valid(y0 + 1, x0) &&
                         f.valid(y0 + 1, x0 + 1))
                            ? 1
                            : 0;
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mvseg
