#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "mvseg/core.hpp"
#include "mvseg/layers.hpp"

namespace mvseg {

/// Architecture of the two-branch encoder-decoder.
///
/// Encoder level l applies a ReLU convolution to each branch, adds the depth
/// features into the RGB branch, and max-pools both (switches remembered).
/// The decoder walks the levels back: memorized unpooling, a ReLU transposed
/// convolution, and a 1x1 classifier at every level, so level l yields scores
/// at (H/2^l, W/2^l).
struct ToyNetConfig {
  std::size_t num_classes = 2;
  std::size_t rgb_channels = 3;
  std::size_t depth_channels = 1;
  /// Feature width per encoder level; its size is the number of levels.
  std::vector<std::size_t> widths{8, 16};
  std::size_t kernel = 3;

  std::size_t levels() const { return widths.size(); }
  /// Channels of the decoder features classified at level l.
  std::size_t decoder_width(std::size_t level) const { return widths[level == 0 ? 0 : level - 1]; }
  void validate() const;
};

/// Named parameter blobs in a fixed order. Also used as the gradient
/// container.
class ToyNetParams {
 public:
  ToyNetParams() = default;
  /// All-zero parameters.
  explicit ToyNetParams(ToyNetConfig config);

  /// He-normal weights, zero biases.
  static ToyNetParams he_init(const ToyNetConfig& config, std::mt19937_64& rng);

  const ToyNetConfig& config() const { return config_; }
  std::size_t blob_count() const { return blobs_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& blob(std::size_t i) { return blobs_[i]; }
  const Tensor& blob(std::size_t i) const { return blobs_[i]; }
  std::size_t parameter_count() const;

  Tensor& enc_rgb_w(std::size_t l) { return blobs_[4 * l]; }
  Tensor& enc_rgb_b(std::size_t l) { return blobs_[4 * l + 1]; }
  Tensor& enc_depth_w(std::size_t l) { return blobs_[4 * l + 2]; }
  Tensor& enc_depth_b(std::size_t l) { return blobs_[4 * l + 3]; }
  Tensor& dec_w(std::size_t l) { return blobs_[4 * levels() + 2 * l]; }
  Tensor& dec_b(std::size_t l) { return blobs_[4 * levels() + 2 * l + 1]; }
  Tensor& cls_w(std::size_t l) { return blobs_[6 * levels() + 2 * l]; }
  Tensor& cls_b(std::size_t l) { return blobs_[6 * levels() + 2 * l + 1]; }
  const Tensor& enc_rgb_w(std::size_t l) const { return blobs_[4 * l]; }
  const Tensor& enc_rgb_b(std::size_t l) const { return blobs_[4 * l + 1]; }
  const Tensor& enc_depth_w(std::size_t l) const { return blobs_[4 * l + 2]; }
  const Tensor& enc_depth_b(std::size_t l) const { return blobs_[4 * l + 3]; }
  const Tensor& dec_w(std::size_t l) const { return blobs_[4 * levels() + 2 * l]; }
  const Tensor& dec_b(std::size_t l) const { return blobs_[4 * levels() + 2 * l + 1]; }
  const Tensor& cls_w(std::size_t l) const { return blobs_[6 * levels() + 2 * l]; }
  const Tensor& cls_b(std::size_t l) const { return blobs_[6 * levels() + 2 * l + 1]; }

  /// this += scale * other
  void axpy(double scale, const ToyNetParams& other);
  bool all_finite() const;

  friend bool operator==(const ToyNetParams& a, const ToyNetParams& b);

 private:
  std::size_t levels() const { return config_.levels(); }

  ToyNetConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> blobs_;
};

/// Intermediate activations kept for the backward pass.
struct ToyNetCache {
  Tensor rgb;
  Tensor depth;
  std::vector<Tensor> rgb_act;    // a_l
  std::vector<Tensor> depth_act;  // d_l
  std::vector<Tensor> fused;      // a_l + d_l
  std::vector<Tensor> pooled;     // max_pool2(fused_l)
  std::vector<std::vector<std::uint32_t>> switches;
  std::vector<Tensor> depth_pooled;
  std::vector<std::vector<std::uint32_t>> depth_switches;
  std::vector<Tensor> unpooled;  // decoder input after unpooling, per level
  /// Decoder features at each level (the classifier inputs).
  std::vector<Tensor> features;
  /// Scores at each level, index = level (0 is full resolution).
  std::vector<Tensor> scores;
};

/// Runs the network. Spatial dims must be divisible by 2^levels.
ToyNetCache toynet_run(const ToyNetParams& params, const Tensor& rgb, const Tensor& depth);

/// Score maps ordered coarse to fine.
std::vector<Tensor> toynet_forward(const ToyNetParams& params, const Tensor& rgb,
                                   const Tensor& depth);

/// 1x1 classifier of one level.
Tensor classify(const ToyNetParams& params, std::size_t level, const Tensor& features);
/// Accumulates classifier weight gradients into `grads`; returns the gradient
/// with respect to `features`.
Tensor classify_backward(const ToyNetParams& params, std::size_t level, const Tensor& features,
                         const Tensor& grad_scores, ToyNetParams& grads);

/// Backpropagates gradients given per level with respect to the scores
/// and/or the decoder features (empty tensors mean zero) and accumulates the
/// parameter gradients into `grads`.
void toynet_backward(const ToyNetParams& params, const ToyNetCache& cache,
                     const std::vector<Tensor>& grad_scores,
                     const std::vector<Tensor>& grad_features, ToyNetParams& grads);

/// Converts a depth map to the single-channel network input (meters, missing
/// depth as 0).
Tensor depth_input(const Plane<double>& depth);

// Checkpoint: text manifest header ("MVCKPT 1", config lines, one
// "name C H W" line per blob, "end") followed by the blobs as MVFT records.
void write_checkpoint(std::ostream& out, const ToyNetParams& params);
ToyNetParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ToyNetParams& params);
ToyNetParams load_checkpoint(const std::string& path);

}  // namespace mvseg
