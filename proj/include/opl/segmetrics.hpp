#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opl/image.hpp"

namespace opl {

/// Per-class TP/FP/FN over pixels whose ground truth is not kIgnore.
struct ConfusionCounts {
  int num_classes = 0;
  std::vector<std::uint64_t> tp, fp, fn;
  std::uint64_t evaluated_pixels = 0;

  explicit ConfusionCounts(int classes = 0)
      : num_classes(classes), tp(static_cast<std::size_t>(classes), 0),
        fp(static_cast<std::size_t>(classes), 0), fn(static_cast<std::size_t>(classes), 0) {}

  /// Accumulates another image's counts (dataset-level evaluation).
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// IoU values are percentages; absent classes have no IoU.
struct MetricsReport {
  std::vector<std::optional<double>> iou;
  double miou = 100.0;
  double pixel_accuracy = 100.0;
  std::vector<int> present_classes;
};

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt);

/// mIoU averages the classes present in gt or prediction. With no evaluated
/// pixels both mIoU and accuracy are 100.
MetricsReport metrics(const ConfusionCounts& counts);

/// r(q) = 1 iff pred(q) != gt(q) and gt(q) is not ignored.
BoolMap misclassification_map(const LabelMap& pred, const LabelMap& gt);

/// CSV header matching metrics_csv_row for `num_classes` classes.
std::string metrics_csv_header(int num_classes);
/// "image_id,miou,pixel_acc,iou_0,..."; absent classes leave an empty field.
std::string metrics_csv_row(const std::string& image_id, const MetricsReport& report);

}  // namespace opl
