#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace opl {

inline constexpr std::uint8_t kIgnore = 255;

/// Pixel coordinate. Row-major linear index is row * width + col.
struct Pixel {
  int row = 0;
  int col = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// RGB image with values in [0,1], row-major, channel-interleaved.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c = 3)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  float& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  float at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  /// Throws ValidationError when the length or value-range invariant is broken.
  void validate() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// Per-pixel class indices in [0, num_classes) or kIgnore.
struct LabelMap {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), num_classes(c),
        data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * width + c;
  }
  std::uint8_t& at(int r, int c) { return data[index(r, c)]; }
  std::uint8_t at(int r, int c) const { return data[index(r, c)]; }

  void validate() const;

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Binary per-pixel map (misclassification maps, regions, edges).
struct BoolMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BoolMap() = default;
  BoolMap(int h, int w, bool fill = false)
      : height(h), width(w),
        data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v) { data[static_cast<std::size_t>(r) * width + c] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BoolMap&, const BoolMap&) = default;
};

/// Per-class pixel counts over non-ignore pixels.
std::vector<std::size_t> class_histogram(const LabelMap& lbl);

}  // namespace opl
