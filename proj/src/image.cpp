#include "opl/image.hpp"

#include <algorithm>
#include <string>

#include "opl/error.hpp"

namespace opl {

void ImageTensor::validate() const {
  if (height < 0 || width < 0 || channels < 1) {
    throw ValidationError("image: negative dimensions");
  }
  if (data.size() != pixels() * static_cast<std::size_t>(channels)) {
    throw ValidationError("image: data length " + std::to_string(data.size()) +
                          " does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x" + std::to_string(channels));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(data[i] >= 0.0f && data[i] <= 1.0f)) {
      throw ValidationError("image: value at index " + std::to_string(i) +
                            " outside [0,1]");
    }
  }
}

void LabelMap::validate() const {
  if (num_classes < 1 || num_classes > 254) {
    throw ValidationError("label map: class count " + std::to_string(num_classes) +
                          " outside 1..254");
  }
  if (data.size() != pixels()) {
    throw ValidationError("label map: data length does not match dimensions");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] >= num_classes && data[i] != kIgnore) {
      throw ValidationError("label map: class index " + std::to_string(data[i]) +
                            " at pixel " + std::to_string(i) + " not below " +
                            std::to_string(num_classes));
    }
  }
}

std::size_t BoolMap::count() const {
  return static_cast<std::size_t>(std::count_if(
      data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

std::vector<std::size_t> class_histogram(const LabelMap& lbl) {
  std::vector<std::size_t> hist(static_cast<std::size_t>(lbl.num_classes), 0);
  for (auto v : lbl.data) {
    if (v != kIgnore && v < lbl.num_classes) ++hist[v];
  }
  return hist;
}

}  // namespace opl
