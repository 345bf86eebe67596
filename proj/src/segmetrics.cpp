#include "opl/segmetrics.hpp"

#include <cstdio>

#include "opl/error.hpp"

namespace opl {
namespace {

void check_pair(const LabelMap& pred, const LabelMap& gt, const char* who) {
  if (pred.height != gt.height || pred.width != gt.width || pred.data.size() != gt.data.size()) {
    throw ShapeError(std::string(who) + ": prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " + std::to_string(gt.height) +
                     "x" + std::to_string(gt.width));
  }
}

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.num_classes != num_classes) throw ShapeError("confusion counts differ in class count");
  for (std::size_t c = 0; c < tp.size(); ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  evaluated_pixels += other.evaluated_pixels;
  return *this;
}

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& gt) {
  check_pair(pred, gt, "confusion");
  if (pred.num_classes != gt.num_classes) {
    throw ShapeError("confusion: class counts differ (" + std::to_string(pred.num_classes) + " vs " +
                     std::to_string(gt.num_classes) + ")");
  }
  ConfusionCounts counts(gt.num_classes);
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const auto g = gt.data[i];
    if (g == kIgnore) continue;
    const auto p = pred.data[i];
    if (g >= gt.num_classes || (p >= gt.num_classes && p != kIgnore)) {
      throw ValidationError("confusion: class index out of range at pixel " + std::to_string(i));
    }
    ++counts.evaluated_pixels;
    if (p == g) {
      ++counts.tp[g];
    } else {
      ++counts.fn[g];
      if (p != kIgnore) ++counts.fp[p];
    }
  }
  return counts;
}

MetricsReport metrics(const ConfusionCounts& counts) {
  MetricsReport report;
  report.iou.assign(static_cast<std::size_t>(counts.num_classes), std::nullopt);
  if (counts.evaluated_pixels == 0) return report;

  double iou_sum = 0.0;
  std::uint64_t correct = 0;
  for (int c = 0; c < counts.num_classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    correct += counts.tp[i];
    const std::uint64_t denom = counts.tp[i] + counts.fn[i] + counts.fp[i];
    if (denom == 0) continue;
    const double iou = 100.0 * static_cast<double>(counts.tp[i]) / static_cast<double>(denom);
    report.iou[i] = iou;
    report.present_classes.push_back(c);
    iou_sum += iou;
  }
  report.miou = report.present_classes.empty() ? 100.0 : iou_sum / static_cast<double>(report.present_classes.size());
  report.pixel_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(counts.evaluated_pixels);
  return report;
}

BoolMap misclassification_map(const LabelMap& pred, const LabelMap& gt) {
  check_pair(pred, gt, "misclassification_map");
  BoolMap r(gt.height, gt.width);
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    r.data[i] = (gt.data[i] != kIgnore && pred.data[i] != gt.data[i]) ? 1 : 0;
  }
  return r;
}

std::string metrics_csv_header(int num_classes) {
  std::string h = "image_id,miou,pixel_acc";
  for (int c = 0; c < num_classes; ++c) h += ",iou_" + std::to_string(c);
  return h;
}

std::string metrics_csv_row(const std::string& image_id, const MetricsReport& report) {
  std::string row = image_id + "," + format_fixed(report.miou) + "," + format_fixed(report.pixel_accuracy);
  for (const auto& iou : report.iou) {
    row += ",";
    if (iou) row += format_fixed(*iou);
  }
  return row;
}

}  // namespace opl
