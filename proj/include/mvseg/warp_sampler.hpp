#pragma once

#include "mvseg/core.hpp"
#include "mvseg/geometry.hpp"

namespace mvseg {

/// A map synthesized in the target view. Invalid pixels hold 0.
struct SampledMap {
  Tensor values;
  Mask validity;
};

/// Bilinear sampling of `source` at the grid locations (zero padding). An
/// output pixel is valid when the grid is valid there and the sample lies
/// inside [0, W-1] x [0, H-1] of the source, so every tap with nonzero
/// weight is an in-image pixel.
SampledMap bilinear_sample(const Tensor& source, const WarpGrid& grid);

/// Exact transpose of bilinear_sample with respect to the source values.
/// The grid is fixed; no gradient flows into its coordinates.
Tensor bilinear_sample_backward(const Tensor& grad_output, const WarpGrid& grid,
                                const Shape& source_shape);

}  // namespace mvseg
