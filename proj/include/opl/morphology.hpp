#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "opl/image.hpp"

namespace opl {

/// Component ids per pixel: 0 is background, components are 1..count in
/// row-major order of their first pixel.
struct ComponentLabeling {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
  std::vector<std::size_t> sizes;  // sizes[id - 1]

  int count() const { return static_cast<int>(sizes.size()); }
  /// Id of the largest component (first in row-major order on ties), 0 if none.
  int largest() const;
};

/// Non-negative per-pixel distances.
struct DistanceField {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

ComponentLabeling connected_components(const BoolMap& mask, int connectivity = 8);

/// Exact Euclidean distance from every region pixel to the nearest pixel
/// outside the region; pixels outside are 0. The image is treated as
/// surrounded by a ring of outside pixels, so a pixel's distance never
/// exceeds min(row+1, col+1, H-row, W-col).
DistanceField euclidean_dt(const BoolMap& region);

/// Pixels with a 4-neighbour carrying a different label (kIgnore counts as a label).
BoolMap label_edges(const LabelMap& lbl);

/// SLIC superpixels; returns contiguous segment ids 0..n-1, each segment
/// 4-connected. `sigma` > 0 blurs the RGB image with a Gaussian before the
/// CIELAB conversion.
std::vector<int> slic(const ImageTensor& img, int k, double compactness = 10.0, int iterations = 10,
                      double sigma = 1.0);

/// Multi-source Dijkstra on the 8-connected grid with edge cost
/// step_length + gamma * |lum(p) - lum(q)|, lum = mean of RGB.
DistanceField geodesic_field(const ImageTensor& img, const std::vector<std::size_t>& sources,
                             double gamma = 50.0);

}  // namespace opl
