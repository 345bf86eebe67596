#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "opl/image.hpp"

namespace opl {

/// Parameters of the synthetic labeled-scene generator.
struct SceneSpec {
  int height = 64;
  int width = 64;
  int num_classes = 4;  // class 0 is background
  int min_shapes = 1;
  int max_shapes = 3;
  double texture_noise_sigma = 0.08;
  double color_jitter = 0.06;  // per-shape base-color perturbation (std-dev)
  std::uint64_t seed = 7;

  /// Throws ValidationError on out-of-range fields.
  void validate() const;
};

/// Base RGB color of a class; distinct for every class of `num_classes`.
std::array<double, 3> class_color(int cls, int num_classes);

/// Deterministic scene: a pure function of (spec, index). Each shape is an
/// axis-aligned rectangle, ellipse or convex polygon of a random non-background
/// class; later shapes occlude earlier ones. Image values are quantized to
/// multiples of 1/255 so the scene round-trips through 8-bit files exactly.
std::pair<ImageTensor, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t index);

}  // namespace opl
