#include "mvseg/metrics.hpp"

#include <cstdio>
#include <ostream>

namespace mvseg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0 || num_classes >= kIgnoreLabel) {
    throw ConfigError("number of classes must be in [1, 254]");
  }
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::uint64_t n = 0;
  for (std::size_t j = 0; j < k_; ++j) n += (*this)(i, j);
  return n;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < k_; ++i) n += (*this)(i, j);
  return n;
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth) {
  if (!predicted.same_size(truth.height(), truth.width())) {
    throw ShapeError("prediction and ground truth differ in size");
  }
  check_labels(truth, k_);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Label t = truth.data()[i];
    if (t == kIgnoreLabel) continue;
    const Label p = predicted.data()[i];
    if (p >= k_) {
      throw InvalidLabelError("predicted label " + std::to_string(p) + " at pixel " +
                              std::to_string(i) + " is not below K=" + std::to_string(k_));
    }
    ++counts_[t * k_ + p];
  }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
  if (truth >= k_ || predicted >= k_) throw InvalidLabelError("confusion index out of range");
  counts_[truth * k_ + predicted] += count;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

namespace {

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UndefinedMetricError("confusion matrix is empty");
}

}  // namespace

double pixelwise_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::uint64_t trace = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) trace += cm(i, i);
  return static_cast<double>(trace) / static_cast<double>(cm.total());
}

double classwise_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    const auto row = cm.row_sum(i);
    if (row == 0) continue;
    sum += static_cast<double>(cm(i, i)) / static_cast<double>(row);
    ++n;
  }
  return sum / static_cast<double>(n);
}

std::vector<std::optional<double>> class_iou(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.num_classes());
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    const auto row = cm.row_sum(i);
    if (row == 0) continue;
    const auto uni = row + cm.col_sum(i) - cm(i, i);
    out[i] = static_cast<double>(cm(i, i)) / static_cast<double>(uni);
  }
  return out;
}

double mean_iou(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& iou : class_iou(cm)) {
    if (!iou) continue;
    sum += *iou;
    ++n;
  }
  return sum / static_cast<double>(n);
}

MetricSummary summarize(const ConfusionMatrix& cm) {
  return {pixelwise_accuracy(cm), classwise_accuracy(cm), mean_iou(cm)};
}

LabelMap argmax_labels(const Tensor& probs_or_scores) {
  const Shape& s = probs_or_scores.shape();
  if (s.channels >= kIgnoreLabel) throw ConfigError("too many classes for a label map");
  LabelMap out(s.height, s.width, 0);
  const std::size_t plane = s.plane();
  const auto d = probs_or_scores.data();
  for (std::size_t p = 0; p < plane; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < s.channels; ++c) {
      if (d[c * plane + p] > d[best * plane + p]) best = c;
    }
    out.data()[p] = static_cast<Label>(best);
  }
  return out;
}

void print_metric_table(std::ostream& out, const ConfusionMatrix& cm) {
  char buf[96];
  out << "class      IoU\n";
  const auto ious = class_iou(cm);
  for (std::size_t i = 0; i < ious.size(); ++i) {
    if (ious[i]) {
      std::snprintf(buf, sizeof buf, "%-6zu %8.4f\n", i, *ious[i]);
    } else {
      std::snprintf(buf, sizeof buf, "%-6zu %8s\n", i, "n/a");
    }
    out << buf;
  }
  const MetricSummary m = summarize(cm);
  std::snprintf(buf, sizeof buf, "pixelwise  %8.4f\nclasswise  %8.4f\nmean_iou   %8.4f\n",
                m.pixelwise, m.classwise, m.iou);
  out << buf;
}

}  // namespace mvseg
