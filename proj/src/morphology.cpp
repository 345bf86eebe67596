#include "opl/morphology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <queue>
#include <string>

#include "opl/error.hpp"

namespace opl {
namespace {

constexpr std::array<std::array<int, 2>, 4> kNeighbors4{{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};
constexpr std::array<std::array<int, 2>, 8> kNeighbors8{
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over the finite
// samples of f; writes min_v (q - v)^2 + f(v) to d. All values are integers
// below 2^53, so the result is exact.
void squared_dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == inf) continue;
    const double fq = f[static_cast<std::size_t>(q)] + static_cast<double>(q) * q;
    double s = -inf;
    while (k >= 0) {
      const int vk = v[static_cast<std::size_t>(k)];
      s = (fq - (f[static_cast<std::size_t>(vk)] + static_cast<double>(vk) * vk)) / (2.0 * (q - vk));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -inf : s;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int vj = v[static_cast<std::size_t>(j)];
    const double dq = static_cast<double>(q - vj);
    d[static_cast<std::size_t>(q)] = dq * dq + f[static_cast<std::size_t>(vj)];
  }
}

struct Lab {
  double l, a, b;
};

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

Lab rgb_to_lab(double r, double g, double b) {
  r = srgb_to_linear(r);
  g = srgb_to_linear(g);
  b = srgb_to_linear(b);
  const double x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
  const double y = (0.2126729 * r + 0.7151522 * g + 0.0721750 * b) / 1.0;
  const double z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
  auto f = [](double t) {
    return t > 0.008856 ? std::cbrt(t) : (7.787 * t + 16.0 / 116.0);
  };
  const double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

struct Center {
  double l, a, b, y, x;
};

// Separable Gaussian with clamp-to-edge borders; sigma = 0 copies the image.
std::vector<double> gaussian_blur(const ImageTensor& img, double sigma) {
  const int h = img.height, w = img.width, ch = img.channels;
  std::vector<double> out(img.data.begin(), img.data.end());
  if (sigma <= 0) return out;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : kernel) v /= sum;
  std::vector<double> tmp(out.size());
  auto idx = [&](int r, int c, int k) { return (static_cast<std::size_t>(r) * w + c) * ch + k; };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < ch; ++k) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * out[idx(r, std::clamp(c + i, 0, w - 1), k)];
        tmp[idx(r, c, k)] = acc;
      }
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int k = 0; k < ch; ++k) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[idx(std::clamp(r + i, 0, h - 1), c, k)];
        out[idx(r, c, k)] = acc;
      }
    }
  }
  return out;
}

}  // namespace

int ComponentLabeling::largest() const {
  int best = 0;
  for (int id = 1; id <= count(); ++id) {
    if (best == 0 || sizes[static_cast<std::size_t>(id) - 1] > sizes[static_cast<std::size_t>(best) - 1]) best = id;
  }
  return best;
}

ComponentLabeling connected_components(const BoolMap& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw ValidationError("connectivity must be 4 or 8, got " + std::to_string(connectivity));
  }
  const int h = mask.height, w = mask.width;
  ComponentLabeling out{h, w, std::vector<int>(mask.pixels(), 0), {}};
  std::deque<std::size_t> queue;
  for (std::size_t start = 0; start < mask.pixels(); ++start) {
    if (!mask.data[start] || out.labels[start] != 0) continue;
    const int id = out.count() + 1;
    std::size_t size = 0;
    out.labels[start] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      ++size;
      const int r = static_cast<int>(p / static_cast<std::size_t>(w));
      const int c = static_cast<int>(p % static_cast<std::size_t>(w));
      auto visit = [&](int dr, int dc) {
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= h || nc < 0 || nc >= w) return;
        const std::size_t q = static_cast<std::size_t>(nr) * w + nc;
        if (mask.data[q] && out.labels[q] == 0) {
          out.labels[q] = id;
          queue.push_back(q);
        }
      };
      if (connectivity == 4) {
        for (auto [dr, dc] : kNeighbors4) visit(dr, dc);
      } else {
        for (auto [dr, dc] : kNeighbors8) visit(dr, dc);
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

DistanceField euclidean_dt(const BoolMap& region) {
  const int h = region.height, w = region.width;
  const int ph = h + 2, pw = w + 2;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(ph) * pw, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (region.at(r, c)) grid[static_cast<std::size_t>(r + 1) * pw + (c + 1)] = inf;
    }
  }
  const int n = std::max(ph, pw);
  std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);

  f.resize(static_cast<std::size_t>(ph));
  d.resize(static_cast<std::size_t>(ph));
  for (int c = 0; c < pw; ++c) {
    for (int r = 0; r < ph; ++r) f[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r) * pw + c];
    squared_dt_1d(f, d, v, z);
    for (int r = 0; r < ph; ++r) grid[static_cast<std::size_t>(r) * pw + c] = d[static_cast<std::size_t>(r)];
  }
  f.resize(static_cast<std::size_t>(pw));
  d.resize(static_cast<std::size_t>(pw));
  for (int r = 0; r < ph; ++r) {
    for (int c = 0; c < pw; ++c) f[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(r) * pw + c];
    squared_dt_1d(f, d, v, z);
    for (int c = 0; c < pw; ++c) grid[static_cast<std::size_t>(r) * pw + c] = d[static_cast<std::size_t>(c)];
  }

  DistanceField out{h, w, std::vector<double>(region.pixels(), 0.0)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (region.at(r, c)) {
        out.data[static_cast<std::size_t>(r) * w + c] =
            std::sqrt(grid[static_cast<std::size_t>(r + 1) * pw + (c + 1)]);
      }
    }
  }
  return out;
}

BoolMap label_edges(const LabelMap& lbl) {
  BoolMap edges(lbl.height, lbl.width);
  for (int r = 0; r < lbl.height; ++r) {
    for (int c = 0; c < lbl.width; ++c) {
      const auto v = lbl.at(r, c);
      for (auto [dr, dc] : kNeighbors4) {
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= lbl.height || nc < 0 || nc >= lbl.width) continue;
        if (lbl.at(nr, nc) != v) {
          edges.set(r, c, true);
          break;
        }
      }
    }
  }
  return edges;
}

std::vector<int> slic(const ImageTensor& img, int k, double compactness, int iterations, double sigma) {
  const int h = img.height, w = img.width;
  const auto n = static_cast<long long>(img.pixels());
  if (k < 1 || k > n) {
    throw ValidationError("slic: segment count " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  if (img.channels != 3) throw ShapeError("slic: expects an RGB image");
  if (!(compactness > 0)) throw ValidationError("slic: compactness must be positive");
  if (sigma < 0) throw ValidationError("slic: negative smoothing sigma");

  const std::vector<double> rgb = gaussian_blur(img, sigma);
  std::vector<Lab> lab(img.pixels());
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    lab[p] = rgb_to_lab(rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]);
  }
  auto lab_at = [&](int r, int c) -> const Lab& { return lab[static_cast<std::size_t>(r) * w + c]; };

  // Grid of ny x nx seeds with ny * nx close to k, following the aspect ratio.
  const double step = std::sqrt(static_cast<double>(n) / k);
  int ny = std::clamp(static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * h / w))), 1, h);
  int nx = std::clamp(static_cast<int>(std::lround(static_cast<double>(k) / ny)), 1, w);

  auto gradient = [&](int r, int c) {
    const int r0 = std::max(r - 1, 0), r1 = std::min(r + 1, h - 1);
    const int c0 = std::max(c - 1, 0), c1 = std::min(c + 1, w - 1);
    const Lab &a = lab_at(r, c1), &b = lab_at(r, c0), &u = lab_at(r1, c), &d = lab_at(r0, c);
    auto sq = [](const Lab& p, const Lab& q) {
      return (p.l - q.l) * (p.l - q.l) + (p.a - q.a) * (p.a - q.a) + (p.b - q.b) * (p.b - q.b);
    };
    return sq(a, b) + sq(u, d);
  };

  std::vector<Center> centers;
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      int cy = std::min(h - 1, static_cast<int>((i + 0.5) * h / ny));
      int cx = std::min(w - 1, static_cast<int>((j + 0.5) * w / nx));
      int by = cy, bx = cx;
      double best = gradient(cy, cx);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = cy + dy, xx = cx + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const double g = gradient(yy, xx);
          if (g < best) {
            best = g;
            by = yy;
            bx = xx;
          }
        }
      }
      const Lab& c = lab_at(by, bx);
      centers.push_back({c.l, c.a, c.b, static_cast<double>(by), static_cast<double>(bx)});
    }
  }

  const double spatial = (compactness / step) * (compactness / step);
  auto distance = [&](const Center& ctr, int r, int c) {
    const Lab& p = lab_at(r, c);
    const double dl = p.l - ctr.l, da = p.a - ctr.a, db = p.b - ctr.b;
    const double dy = r - ctr.y, dx = c - ctr.x;
    return dl * dl + da * da + db * db + spatial * (dy * dy + dx * dx);
  };

  std::vector<int> labels(img.pixels(), -1);
  std::vector<double> best(img.pixels());
  const int window = static_cast<int>(std::ceil(step));
  for (int it = 0; it < iterations; ++it) {
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& ctr = centers[ci];
      const int r0 = std::max(0, static_cast<int>(std::floor(ctr.y)) - window);
      const int r1 = std::min(h - 1, static_cast<int>(std::ceil(ctr.y)) + window);
      const int c0 = std::max(0, static_cast<int>(std::floor(ctr.x)) - window);
      const int c1 = std::min(w - 1, static_cast<int>(std::ceil(ctr.x)) + window);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const double dist = distance(ctr, r, c);
          const std::size_t p = static_cast<std::size_t>(r) * w + c;
          if (dist < best[p]) {
            best[p] = dist;
            labels[p] = static_cast<int>(ci);
          }
        }
      }
    }
    // Pixels outside every window join their nearest center.
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * w + c;
        if (labels[p] >= 0) continue;
        for (std::size_t ci = 0; ci < centers.size(); ++ci) {
          const double dist = distance(centers[ci], r, c);
          if (dist < best[p]) {
            best[p] = dist;
            labels[p] = static_cast<int>(ci);
          }
        }
      }
    }
    std::vector<Center> sums(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<std::size_t> counts(centers.size(), 0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t p = static_cast<std::size_t>(r) * w + c;
        const auto ci = static_cast<std::size_t>(labels[p]);
        const Lab& v = lab[p];
        sums[ci].l += v.l;
        sums[ci].a += v.a;
        sums[ci].b += v.b;
        sums[ci].y += r;
        sums[ci].x += c;
        ++counts[ci];
      }
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[ci]);
      centers[ci] = {sums[ci].l * inv, sums[ci].a * inv, sums[ci].b * inv, sums[ci].y * inv, sums[ci].x * inv};
    }
  }

  // Connectivity: keep each label's largest 4-connected piece, merge every
  // other piece into the adjacent established segment of largest size.
  std::vector<int> comp(img.pixels(), -1);
  std::vector<int> comp_label;
  std::vector<std::size_t> comp_size;
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < img.pixels(); ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(comp_label.size());
    comp_label.push_back(labels[s]);
    std::size_t size = 0;
    comp[s] = id;
    queue.push_back(s);
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      ++size;
      const int r = static_cast<int>(p / static_cast<std::size_t>(w));
      const int c = static_cast<int>(p % static_cast<std::size_t>(w));
      for (auto [dr, dc] : kNeighbors4) {
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
        const std::size_t q = static_cast<std::size_t>(nr) * w + nc;
        if (comp[q] < 0 && labels[q] == labels[s]) {
          comp[q] = id;
          queue.push_back(q);
        }
      }
    }
    comp_size.push_back(size);
  }
  const std::size_t ncomp = comp_label.size();
  std::vector<int> main_comp(centers.size(), -1);
  for (std::size_t ci = 0; ci < ncomp; ++ci) {
    auto& m = main_comp[static_cast<std::size_t>(comp_label[ci])];
    if (m < 0 || comp_size[ci] > comp_size[static_cast<std::size_t>(m)]) m = static_cast<int>(ci);
  }
  // owner[ci]: segment (label) a component belongs to, -1 while orphaned.
  std::vector<int> owner(ncomp, -1);
  std::vector<std::size_t> segment_size(centers.size(), 0);
  for (std::size_t l = 0; l < centers.size(); ++l) {
    if (main_comp[l] >= 0) {
      owner[static_cast<std::size_t>(main_comp[l])] = static_cast<int>(l);
      segment_size[l] = comp_size[static_cast<std::size_t>(main_comp[l])];
    }
  }
  std::vector<std::vector<int>> adjacency(ncomp);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * w + c;
      for (auto [dr, dc] : {std::array<int, 2>{0, 1}, std::array<int, 2>{1, 0}}) {
        const int nr = r + dr, nc = c + dc;
        if (nr >= h || nc >= w) continue;
        const std::size_t q = static_cast<std::size_t>(nr) * w + nc;
        if (comp[p] != comp[q]) {
          adjacency[static_cast<std::size_t>(comp[p])].push_back(comp[q]);
          adjacency[static_cast<std::size_t>(comp[q])].push_back(comp[p]);
        }
      }
    }
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t ci = 0; ci < ncomp; ++ci) {
      if (owner[ci] >= 0) continue;
      int target = -1;
      for (int nb : adjacency[ci]) {
        const int l = owner[static_cast<std::size_t>(nb)];
        if (l < 0) continue;
        if (target < 0 || segment_size[static_cast<std::size_t>(l)] > segment_size[static_cast<std::size_t>(target)] ||
            (segment_size[static_cast<std::size_t>(l)] == segment_size[static_cast<std::size_t>(target)] && l < target)) {
          target = l;
        }
      }
      if (target >= 0) {
        owner[ci] = target;
        segment_size[static_cast<std::size_t>(target)] += comp_size[ci];
        changed = true;
      }
    }
  }

  std::vector<int> remap(centers.size(), -1);
  std::vector<int> out(img.pixels());
  int next = 0;
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const int l = owner[static_cast<std::size_t>(comp[p])];
    auto& id = remap[static_cast<std::size_t>(l)];
    if (id < 0) id = next++;
    out[p] = id;
  }
  return out;
}

DistanceField geodesic_field(const ImageTensor& img, const std::vector<std::size_t>& sources, double gamma) {
  if (sources.empty()) throw ValidationError("geodesic_field: empty source set");
  if (img.channels != 3) throw ShapeError("geodesic_field: expects an RGB image");
  const int h = img.height, w = img.width;
  std::vector<double> lum(img.pixels());
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    lum[p] = (static_cast<double>(img.data[3 * p]) + img.data[3 * p + 1] + img.data[3 * p + 2]) / 3.0;
  }
  DistanceField field{h, w, std::vector<double>(img.pixels(), std::numeric_limits<double>::infinity())};
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t s : sources) {
    if (s >= img.pixels()) throw ValidationError("geodesic_field: source pixel outside the image");
    field.data[s] = 0.0;
    heap.push({0.0, s});
  }
  const double diag = std::sqrt(2.0);
  while (!heap.empty()) {
    const auto [dist, p] = heap.top();
    heap.pop();
    if (dist > field.data[p]) continue;
    const int r = static_cast<int>(p / static_cast<std::size_t>(w));
    const int c = static_cast<int>(p % static_cast<std::size_t>(w));
    for (auto [dr, dc] : kNeighbors8) {
      const int nr = r + dr, nc = c + dc;
      if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
      const std::size_t q = static_cast<std::size_t>(nr) * w + nc;
      const double step = (dr != 0 && dc != 0) ? diag : 1.0;
      const double nd = dist + step + gamma * std::abs(lum[p] - lum[q]);
      if (nd < field.data[q]) {
        field.data[q] = nd;
        heap.push({nd, q});
      }
    }
  }
  return field;
}

}  // namespace opl
