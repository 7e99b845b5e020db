#include "mvseg/warp_sampler.hpp"

#include <algorithm>
#include <cmath>

namespace mvseg {

namespace {

struct Taps {
  std::size_t x0, x1, y0, y1;
  double wx, wy;  // weights of x1 / y1
};

// Valid samples satisfy 0 <= x <= extent-1; at the far edge the upper tap
// collapses onto the last pixel with zero weight on its partner.
bool axis_taps(double pos, std::size_t extent, std::size_t& lo, std::size_t& hi, double& frac) {
  const double max_pos = static_cast<double>(extent - 1);
  // Normalization round-off must not turn a node sample into a two-tap blend.
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) pos = nearest;
  if (!(pos >= 0.0 && pos <= max_pos)) return false;
  if (extent == 1) {
    lo = hi = 0;
    frac = 0.0;
    return true;
  }
  const double f = std::min(std::floor(pos), max_pos - 1.0);
  lo = static_cast<std::size_t>(f);
  hi = lo + 1;
  frac = pos - f;
  return true;
}

bool compute_taps(const WarpGrid& grid, std::size_t y, std::size_t x, std::size_t src_h,
                  std::size_t src_w, Taps& t) {
  if (!grid.valid(y, x)) return false;
  const double sx = denormalize_coord(grid.u(y, x), src_w);
  const double sy = denormalize_coord(grid.v(y, x), src_h);
  return axis_taps(sx, src_w, t.x0, t.x1, t.wx) && axis_taps(sy, src_h, t.y0, t.y1, t.wy);
}

}  // namespace

SampledMap bilinear_sample(const Tensor& source, const WarpGrid& grid) {
  const std::size_t h = grid.height();
  const std::size_t w = grid.width();
  SampledMap out{Tensor({source.channels(), h, w}, 0.0), Mask(h, w, 0)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Taps t{};
      if (!compute_taps(grid, y, x, source.height(), source.width(), t)) continue;
      out.validity(y, x) = 1;
      const double w00 = (1 - t.wy) * (1 - t.wx);
      const double w01 = (1 - t.wy) * t.wx;
      const double w10 = t.wy * (1 - t.wx);
      const double w11 = t.wy * t.wx;
      for (std::size_t c = 0; c < source.channels(); ++c) {
        out.values(c, y, x) = w00 * source(c, t.y0, t.x0) + w01 * source(c, t.y0, t.x1) +
                              w10 * source(c, t.y1, t.x0) + w11 * source(c, t.y1, t.x1);
      }
    }
  }
  return out;
}

Tensor bilinear_sample_backward(const Tensor& grad_output, const WarpGrid& grid,
                                const Shape& source_shape) {
  if (grad_output.height() != grid.height() || grad_output.width() != grid.width() ||
      grad_output.channels() != source_shape.channels) {
    throw ShapeError("gradient " + to_string(grad_output.shape()) + " does not match the grid");
  }
  Tensor grad_source(source_shape, 0.0);
  for (std::size_t y = 0; y < grid.height(); ++y) {
    for (std::size_t x = 0; x < grid.width(); ++x) {
      Taps t{};
      if (!compute_taps(grid, y, x, source_shape.height, source_shape.width, t)) continue;
      const double w00 = (1 - t.wy) * (1 - t.wx);
      const double w01 = (1 - t.wy) * t.wx;
      const double w10 = t.wy * (1 - t.wx);
      const double w11 = t.wy * t.wx;
      for (std::size_t c = 0; c < source_shape.channels; ++c) {
        const double g = grad_output(c, y, x);
        grad_source(c, t.y0, t.x0) += w00 * g;
        grad_source(c, t.y0, t.x1) += w01 * g;
        grad_source(c, t.y1, t.x0) += w10 * g;
        grad_source(c, t.y1, t.x1) += w11 * g;
      }
    }
  }
  return grad_source;
}

}  // namespace mvseg
