#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mvseg/core.hpp"

namespace mvseg {

// Building blocks of the toy encoder-decoder. Every forward has a matching
// backward that returns gradients with respect to its inputs.
//
// Convolution weights are stored as Tensors of shape (Cout, Cin, k*k); biases
// as (Cout, 1, 1). All convolutions use stride 1 and zero "same" padding, so
// k must be odd.

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t kernel);
ConvGrads conv2d_backward(const Tensor& grad_output, const Tensor& input, const Tensor& weight,
                          std::size_t kernel);

/// Transposed convolution (stride 1): scatters each input value through the
/// kernel. Weight shape is (Cin, Cout, k*k) as in a deconvolution layer.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t kernel);
ConvGrads conv_transpose2d_backward(const Tensor& grad_output, const Tensor& input,
                                    const Tensor& weight, std::size_t kernel);

Tensor relu(const Tensor& input);
/// Gradient through ReLU given the forward *output*.
Tensor relu_backward(const Tensor& grad_output, const Tensor& output);

/// 2x2 max pooling that remembers the flat input index of every maximum.
struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> switches;
};
PoolResult max_pool2(const Tensor& input);
Tensor max_pool2_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& switches,
                          const Shape& input_shape);

/// Places every value at its remembered switch location; other cells are 0.
Tensor max_unpool2(const Tensor& input, const std::vector<std::uint32_t>& switches,
                   const Shape& output_shape);
Tensor max_unpool2_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& switches,
                            const Shape& input_shape);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& acc, const Tensor& b);

struct LossResult {
  double loss = 0;
  Tensor grad;  // with respect to the scores
  std::size_t pixels = 0;
};

/// Mean cross-entropy over labeled pixels. Pixels that are kIgnoreLabel or
/// zero in `valid` (when given) are skipped. Throws DegenerateSampleError if
/// nothing remains.
LossResult cross_entropy_loss(const Tensor& scores, const LabelMap& gt, const Mask* valid = nullptr);

/// Downsamples a label map by `factor` (a power of two). Each output label is
/// drawn from its block with probability equal to the label's frequency among
/// the block's labeled pixels; all-ignore blocks stay ignored.
LabelMap stochastic_pool_labels(const LabelMap& gt, std::size_t factor, std::mt19937_64& rng);

}  // namespace mvseg
