#include "opl/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "opl/error.hpp"
#include "opl/rng.hpp"

namespace opl {
namespace {

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

enum class ShapeKind { kRectangle, kEllipse, kPolygon };

struct Shape {
  ShapeKind kind;
  int cls;
  double cy, cx, ry, rx;
  std::vector<std::array<double, 2>> vertices;  // polygon only, counter-clockwise
  std::array<double, 3> color;

  bool contains(double y, double x) const {
    switch (kind) {
      case ShapeKind::kRectangle:
        return std::abs(y - cy) <= ry && std::abs(x - cx) <= rx;
      case ShapeKind::kEllipse: {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        return dy * dy + dx * dx <= 1.0;
      }
      case ShapeKind::kPolygon: {
        const std::size_t n = vertices.size();
        for (std::size_t i = 0; i < n; ++i) {
          const auto& a = vertices[i];
          const auto& b = vertices[(i + 1) % n];
          const double cross = (b[1] - a[1]) * (y - a[0]) - (b[0] - a[0]) * (x - a[1]);
          if (cross < 0) return false;
        }
        return true;
      }
    }
    return false;
  }
};

}  // namespace

void SceneSpec::validate() const {
  if (height < 1 || width < 1) throw ValidationError("scene: non-positive size");
  if (num_classes < 2 || num_classes > 254) {
    throw ValidationError("scene: num_classes must be in 2..254, got " + std::to_string(num_classes));
  }
  if (min_shapes < 0 || max_shapes < min_shapes) {
    throw ValidationError("scene: invalid shapes_per_scene range");
  }
  if (texture_noise_sigma < 0 || color_jitter < 0) {
    throw ValidationError("scene: negative noise parameter");
  }
}

std::array<double, 3> class_color(int cls, int num_classes) {
  if (cls == 0) return {0.5, 0.5, 0.5};
  const int shape_classes = std::max(1, num_classes - 1);
  const double hue = static_cast<double>(cls - 1) / shape_classes;
  // Alternating value bands.
  const double value = (cls % 2 == 0) ? 0.85 : 0.7;
  return hsv_to_rgb(hue, 0.75, value);
}

std::pair<ImageTensor, LabelMap> generate_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  RngStream rng = RngStream(spec.seed).derive(index);
  const int h = spec.height, w = spec.width;

  const int span = spec.max_shapes - spec.min_shapes + 1;
  const int count = spec.min_shapes + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));

  auto jittered = [&](std::array<double, 3> base) {
    for (auto& v : base) v = std::clamp(v + spec.color_jitter * rng.normal(), 0.0, 1.0);
    return base;
  };

  const auto background = jittered(class_color(0, spec.num_classes));
  std::vector<Shape> shapes;
  shapes.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    Shape shape{};
    shape.kind = static_cast<ShapeKind>(rng.below(3));
    shape.cls = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_classes - 1)));
    shape.cy = rng.uniform() * h;
    shape.cx = rng.uniform() * w;
    shape.ry = (0.12 + 0.23 * rng.uniform()) * h;
    shape.rx = (0.12 + 0.23 * rng.uniform()) * w;
    if (shape.kind == ShapeKind::kPolygon) {
      const int n = 3 + static_cast<int>(rng.below(4));
      // Evenly spread angles with bounded jitter.
      const double step = 2.0 * std::numbers::pi / n;
      const double offset = rng.uniform() * step;
      std::vector<double> angles(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) angles[static_cast<std::size_t>(i)] = offset + step * (i + 0.6 * (rng.uniform() - 0.5));
      // Points on an ellipse in angular order are in convex position.
      for (double a : angles) {
        shape.vertices.push_back({shape.cy + shape.ry * std::sin(a), shape.cx + shape.rx * std::cos(a)});
      }
      // Orient consistently for the half-plane test used by contains().
      double area = 0;
      for (std::size_t i = 0; i < shape.vertices.size(); ++i) {
        const auto& a = shape.vertices[i];
        const auto& b = shape.vertices[(i + 1) % shape.vertices.size()];
        area += a[1] * b[0] - b[1] * a[0];
      }
      if (area < 0) std::reverse(shape.vertices.begin(), shape.vertices.end());
    }
    shape.color = jittered(class_color(shape.cls, spec.num_classes));
    shapes.push_back(std::move(shape));
  }

  ImageTensor img(h, w, 3);
  LabelMap lbl(h, w, spec.num_classes, 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double y = r + 0.5, x = c + 0.5;
      const std::array<double, 3>* color = &background;
      int cls = 0;
      for (const auto& shape : shapes) {
        if (shape.contains(y, x)) {
          color = &shape.color;
          cls = shape.cls;
        }
      }
      lbl.at(r, c) = static_cast<std::uint8_t>(cls);
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp((*color)[ch] + spec.texture_noise_sigma * rng.normal(), 0.0, 1.0);
        img.at(r, c, ch) = static_cast<float>(std::lround(v * 255.0)) / 255.0f;
      }
    }
  }
  return {std::move(img), std::move(lbl)};
}

}  // namespace opl
