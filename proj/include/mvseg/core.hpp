#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mvseg/errors.hpp"

namespace mvseg {

/// (channels, height, width) of a dense tensor.
struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  /// C*H*W; throws ShapeError if a dimension is zero or the product overflows.
  std::size_t checked_size() const;
  std::size_t plane() const { return height * width; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense (C, H, W) array of doubles, row-major with the channel outermost:
/// element (c, y, x) lives at c*H*W + y*W + x.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_.height + y) * shape_.width + x];
  }

  /// Bounds-checked access.
  double at(std::size_t c, std::size_t y, std::size_t x) const;
  void set(std::size_t c, std::size_t y, std::size_t x, double value);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Single-plane (H, W) image of T.
template <typename T>
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(checked_plane_size(height, width), fill) {}
  Plane(std::size_t height, std::size_t width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != checked_plane_size(height, width)) {
      throw ShapeError("plane data length does not match " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  const T& operator()(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool same_size(std::size_t h, std::size_t w) const { return height_ == h && width_ == w; }

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  static std::size_t checked_plane_size(std::size_t h, std::size_t w) {
    return Shape{1, h, w}.checked_size();
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

using Label = std::uint8_t;
/// Unlabeled pixel. Excluded from every loss, fusion and metric.
inline constexpr Label kIgnoreLabel = 255;

using LabelMap = Plane<Label>;
/// Per-pixel validity; nonzero means valid.
using Mask = Plane<std::uint8_t>;

Tensor tensor_new(Shape shape, double fill);

/// 2x2 block mean. Requires even H and W.
Tensor avg_pool2(const Tensor& t);

/// Fails with InvalidLabelError when any non-ignore label is >= num_classes.
void check_labels(const LabelMap& labels, std::size_t num_classes);

// MVFT tensor dump: "MVFT", C, H, W as u32 little-endian, then C*H*W
// little-endian IEEE-754 doubles.
void write_mvft(std::ostream& out, const Tensor& t);
Tensor read_mvft(std::istream& in);
void save_mvft(const std::string& path, const Tensor& t);
Tensor load_mvft(const std::string& path);

}  // namespace mvseg
