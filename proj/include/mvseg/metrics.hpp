#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mvseg/core.hpp"

namespace mvseg {

/// K x K pixel counts; entry (i, j) counts pixels of true class i predicted
/// as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return k_; }
  std::uint64_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t i) const;
  std::uint64_t col_sum(std::size_t j) const;

  /// Adds one image. Pixels whose ground truth is kIgnoreLabel are skipped.
  void accumulate(const LabelMap& predicted, const LabelMap& truth);
  void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// sum_i c_ii / sum_ij c_ij
double pixelwise_accuracy(const ConfusionMatrix& cm);
/// Mean over classes with ground-truth support of c_ii / sum_j c_ij.
double classwise_accuracy(const ConfusionMatrix& cm);
/// Mean over classes with ground-truth support of
/// c_ii / (sum_i c_ij + sum_j c_ij - c_ii).
double mean_iou(const ConfusionMatrix& cm);
/// Per-class IoU; nullopt for classes without ground-truth support.
std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm);

struct MetricSummary {
  double pixelwise = 0;
  double classwise = 0;
  double iou = 0;
};
MetricSummary summarize(const ConfusionMatrix& cm);

/// Per-pixel channel argmax; ties go to the lowest class.
LabelMap argmax_labels(const Tensor& probs_or_scores);

/// Per-class IoU rows followed by the three aggregates.
void print_metric_table(std::ostream& out, const ConfusionMatrix& cm);

}  // namespace mvseg
