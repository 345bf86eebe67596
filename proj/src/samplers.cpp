#include "opl/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "opl/error.hpp"
#include "opl/morphology.hpp"

namespace opl {
namespace {

std::vector<std::size_t> labelled_pixels(const LabelMap& gt) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < gt.pixels(); ++p) {
    if (gt.data[p] != kIgnore) out.push_back(p);
  }
  return out;
}

void require_available(const LabelMap& gt, std::size_t n, const char* who) {
  if (n < 1) throw ValidationError(std::string(who) + ": sample count must be at least 1");
  const std::size_t available = labelled_pixels(gt).size();
  if (n > available) {
    throw ValidationError(std::string(who) + ": requested " + std::to_string(n) + " pixels but only " +
                          std::to_string(available) + " are labelled");
  }
}

class SampleBuilder {
 public:
  explicit SampleBuilder(const LabelMap& gt) : gt_(gt), taken_(gt.pixels(), 0) {
    set_.height = gt.height;
    set_.width = gt.width;
  }

  bool add(std::size_t p) {
    if (taken_[p] || gt_.data[p] == kIgnore) return false;
    taken_[p] = 1;
    set_.entries.push_back({static_cast<int>(p / static_cast<std::size_t>(gt_.width)),
                            static_cast<int>(p % static_cast<std::size_t>(gt_.width)), gt_.data[p]});
    return true;
  }
  bool taken(std::size_t p) const { return taken_[p] != 0; }
  std::size_t size() const { return set_.entries.size(); }
  const std::vector<SampleEntry>& entries() const { return set_.entries; }

  /// Uniform draws over labelled, not yet taken pixels until `n` are held.
  void fill_random(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> pool;
    for (std::size_t p = 0; p < gt_.pixels(); ++p) {
      if (!taken_[p] && gt_.data[p] != kIgnore) pool.push_back(p);
    }
    while (size() < n && !pool.empty()) {
      const auto i = static_cast<std::size_t>(rng.below(pool.size()));
      add(pool[i]);
      pool[i] = pool.back();
      pool.pop_back();
    }
  }

  SampleSet take() { return std::move(set_); }

 private:
  const LabelMap& gt_;
  std::vector<std::uint8_t> taken_;
  SampleSet set_;
};

std::string fmt_reward(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Objective parse_objective(const std::string& name) {
  if (name == "miou") return Objective::kMiou;
  if (name == "acc" || name == "pixel_accuracy") return Objective::kPixelAccuracy;
  throw ConfigError("unknown objective '" + name + "' (expected miou or acc)");
}

std::string to_string(Objective objective) {
  return objective == Objective::kMiou ? "miou" : "acc";
}

std::string to_string(StopCause cause) {
  switch (cause) {
    case StopCause::kThreshold: return "threshold";
    case StopCause::kBudget: return "budget";
    case StopCause::kExhausted: return "exhausted";
  }
  return "unknown";
}

std::vector<std::size_t> SampleSet::pixel_indices() const {
  std::vector<std::size_t> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(linear(e));
  return out;
}

BoolMap SampleSet::mask() const {
  BoolMap m(height, width);
  for (const auto& e : entries) m.set(e.row, e.col, true);
  return m;
}

std::vector<std::size_t> SampleSet::rounds() const {
  std::vector<std::size_t> out;
  std::size_t left = entries.size();
  if (left == 0) return out;
  out.push_back(1);
  --left;
  const auto b = static_cast<std::size_t>(std::max(batch, 1));
  while (left > 0) {
    const std::size_t n = std::min(b, left);
    out.push_back(n);
    left -= n;
  }
  return out;
}

LabelMap SampleSet::sparse_labels(int num_classes) const {
  LabelMap lbl(height, width, num_classes, kIgnore);
  for (const auto& e : entries) lbl.at(e.row, e.col) = e.cls;
  return lbl;
}

void SampleSet::validate(const LabelMap& gt) const {
  if (gt.height != height || gt.width != width) throw ShapeError("sample set and label map differ in size");
  if (batch < 1) throw ValidationError("sample set batch size must be at least 1");
  std::vector<std::uint8_t> seen(gt.pixels(), 0);
  for (std::size_t t = 0; t < entries.size(); ++t) {
    const auto& e = entries[t];
    if (e.row < 0 || e.row >= height || e.col < 0 || e.col >= width) {
      throw ValidationError("sample " + std::to_string(t) + " lies outside the image");
    }
    const std::size_t p = linear(e);
    if (seen[p]) throw ValidationError("sample " + std::to_string(t) + " duplicates an earlier pixel");
    seen[p] = 1;
    if (gt.data[p] == kIgnore || gt.data[p] != e.cls) {
      throw ValidationError("sample " + std::to_string(t) + " label disagrees with the ground truth");
    }
  }
}

std::size_t WeightMap::support_size() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](double v) { return v > 0.0; }));
}

void OracleConfig::validate() const {
  if (budget < 1) throw ConfigError("oracle budget must be at least 1 pixel");
  if (!(threshold > 0.0)) throw ConfigError("oracle threshold must be positive");
  if (batch < 1 || batch > 10) throw ConfigError("oracle batch must lie in 1..10");
}

std::size_t budget_pixels(double fraction, std::size_t pixels) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("budget fraction must lie in (0,1]");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pixels))));
}

int lowest_iou_class(const MetricsReport& report) {
  if (report.present_classes.empty()) throw ValidationError("lowest_iou_class: no present classes");
  int best = report.present_classes.front();
  for (int c : report.present_classes) {
    if (*report.iou[static_cast<std::size_t>(c)] < *report.iou[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

WeightMap build_weight_map(const LabelMap& pred, const LabelMap& gt, Objective objective,
                           bool restrict_to_lowest_class) {
  BoolMap r = misclassification_map(pred, gt);
  if (r.count() == 0) throw ValidationError("build_weight_map: nothing misclassified");

  if (objective == Objective::kMiou && restrict_to_lowest_class) {
    const int cls = lowest_iou_class(metrics(confusion(pred, gt)));
    BoolMap restricted(r.height, r.width);
    for (std::size_t p = 0; p < r.pixels(); ++p) restricted.data[p] = (r.data[p] && gt.data[p] == cls) ? 1 : 0;
    if (restricted.count() == 0) {
      // The class only has false positives: use the pixels wrongly predicted as it.
      for (std::size_t p = 0; p < r.pixels(); ++p) restricted.data[p] = (r.data[p] && pred.data[p] == cls) ? 1 : 0;
    }
    r = std::move(restricted);
  }

  const ComponentLabeling comps = connected_components(r, 8);
  const int largest = comps.largest();
  BoolMap region(r.height, r.width);
  for (std::size_t p = 0; p < r.pixels(); ++p) region.data[p] = comps.labels[p] == largest ? 1 : 0;
  const DistanceField dt = euclidean_dt(region);

  WeightMap w{r.height, r.width, std::vector<double>(r.pixels(), 0.0)};
  if (objective == Objective::kPixelAccuracy) {
    std::size_t best = 0;
    for (std::size_t p = 0; p < dt.data.size(); ++p) {
      if (dt.data[p] > dt.data[best]) best = p;
    }
    w.data[best] = 1.0;
    return w;
  }
  double total = 0.0;
  for (double v : dt.data) total += v;
  for (std::size_t p = 0; p < dt.data.size(); ++p) w.data[p] = dt.data[p] / total;
  return w;
}

std::vector<std::size_t> weighted_sample(const WeightMap& w, std::size_t n, RngStream& rng) {
  std::vector<std::size_t> support;
  std::vector<double> weight;
  for (std::size_t p = 0; p < w.data.size(); ++p) {
    if (w.data[p] > 0.0) {
      support.push_back(p);
      weight.push_back(w.data[p]);
    }
  }
  if (support.empty()) throw ValidationError("weighted_sample: empty support");
  std::vector<std::size_t> picked;
  while (picked.size() < n && !support.empty()) {
    double total = 0.0;
    for (double v : weight) total += v;
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t i = 0;
    for (; i + 1 < weight.size(); ++i) {
      acc += weight[i];
      if (u < acc) break;
    }
    picked.push_back(support[i]);
    support.erase(support.begin() + static_cast<std::ptrdiff_t>(i));
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return picked;
}

LabelingResult pixel_labeling(const ImageTensor& img, const LabelMap& gt, ModelState model,
                              const OracleConfig& cfg, const TrainConfig& tcfg) {
  cfg.validate();
  tcfg.validate();
  if (img.height != gt.height || img.width != gt.width) throw ShapeError("pixel_labeling: image and labels differ in size");
  if (gt.num_classes != model.preset.num_classes) {
    throw ShapeError("pixel_labeling: label map has " + std::to_string(gt.num_classes) + " classes, model " +
                     std::to_string(model.preset.num_classes));
  }
  const auto labelled = labelled_pixels(gt);
  if (labelled.empty()) throw ValidationError("pixel_labeling: ground truth has no labelled pixel");

  RngStream rng(cfg.seed);
  SampleBuilder builder(gt);
  builder.add(labelled[rng.below(labelled.size())]);

  LabelingResult result;
  std::vector<std::size_t> mask;
  LabelMap sparse(gt.height, gt.width, gt.num_classes, kIgnore);
  std::size_t trained = 0;
  while (true) {
    // Reveal the newly acquired labels; training always sees everything revealed so far.
    for (; trained < builder.size(); ++trained) {
      const auto& e = builder.entries()[trained];
      sparse.at(e.row, e.col) = e.cls;
      mask.push_back(static_cast<std::size_t>(e.row) * gt.width + e.col);
    }
    train_inner(model, img, sparse, mask, tcfg);
    result.prediction = predict(forward(model, img));
    result.metrics = metrics(confusion(result.prediction, gt));
    const double reward =
        cfg.objective == Objective::kMiou ? result.metrics.miou : result.metrics.pixel_accuracy;
    result.history.push_back({mask.size(), reward});

    if (reward >= cfg.threshold) {
      result.cause = StopCause::kThreshold;
      break;
    }
    if (mask.size() >= cfg.budget) {
      result.cause = StopCause::kBudget;
      break;
    }
    if (mask.size() >= labelled.size()) {
      result.cause = StopCause::kExhausted;
      break;
    }

    const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), cfg.budget - mask.size());
    const std::size_t target = mask.size() + want;
    WeightMap w = build_weight_map(result.prediction, gt, cfg.objective, cfg.restrict_to_lowest_class);
    for (std::size_t p : mask) w.data[p] = 0.0;
    if (w.support_size() > 0) {
      for (std::size_t p : weighted_sample(w, want, rng)) builder.add(p);
    }
    if (builder.size() < target) {
      // Component exhausted: fall back to any misclassified pixel not yet revealed.
      const BoolMap r = misclassification_map(result.prediction, gt);
      std::vector<std::size_t> pool;
      for (std::size_t p = 0; p < r.pixels(); ++p) {
        if (r.data[p] && !builder.taken(p)) pool.push_back(p);
      }
      while (builder.size() < target && !pool.empty()) {
        const auto i = static_cast<std::size_t>(rng.below(pool.size()));
        builder.add(pool[i]);
        pool[i] = pool.back();
        pool.pop_back();
      }
    }
    // Every round stays at full size.
    if (builder.size() < target) builder.fill_random(target, rng);
  }

  result.samples.height = gt.height;
  result.samples.width = gt.width;
  result.samples.batch = cfg.batch;
  for (std::size_t p : mask) {
    result.samples.entries.push_back({static_cast<int>(p / static_cast<std::size_t>(gt.width)),
                                      static_cast<int>(p % static_cast<std::size_t>(gt.width)), gt.data[p]});
  }
  result.model = std::move(model);
  return result;
}

SampleSet sample_random(const ImageTensor&, const LabelMap& gt, std::size_t n, RngStream& rng) {
  require_available(gt, n, "sample_random");
  SampleBuilder b(gt);
  b.fill_random(n, rng);
  return b.take();
}

SampleSet sample_uniform(const ImageTensor&, const LabelMap& gt, std::size_t n, RngStream& rng) {
  require_available(gt, n, "sample_uniform");
  const auto rows = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t cols = (n + rows - 1) / rows;
  const auto h = static_cast<std::size_t>(gt.height), w = static_cast<std::size_t>(gt.width);
  SampleBuilder b(gt);
  std::size_t empty_tiles = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t tr = t / cols, tc = t % cols;
    const std::size_t r0 = tr * h / rows, r1 = (tr + 1) * h / rows;
    const std::size_t c0 = tc * w / cols, c1 = (tc + 1) * w / cols;
    std::vector<std::size_t> pool;
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) {
        const std::size_t p = r * w + c;
        if (gt.data[p] != kIgnore && !b.taken(p)) pool.push_back(p);
      }
    }
    if (pool.empty()) {
      ++empty_tiles;
      continue;
    }
    b.add(pool[rng.below(pool.size())]);
  }
  // Tiles without a labelled pixel are redrawn from the whole image.
  if (empty_tiles > 0) b.fill_random(n, rng);
  return b.take();
}

SampleSet sample_edge(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng) {
  require_available(gt, n, "sample_edge");
  const BoolMap edges = label_edges(gt);
  std::vector<std::size_t> pool;
  for (std::size_t p = 0; p < edges.pixels(); ++p) {
    if (edges.data[p] && gt.data[p] != kIgnore) pool.push_back(p);
  }
  if (pool.size() < n) return sample_random(img, gt, n, rng);
  SampleBuilder b(gt);
  while (b.size() < n) {
    const auto i = static_cast<std::size_t>(rng.below(pool.size()));
    b.add(pool[i]);
    pool[i] = pool.back();
    pool.pop_back();
  }
  return b.take();
}

SampleSet sample_slic(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng) {
  require_available(gt, n, "sample_slic");
  const std::vector<int> seg = slic(img, static_cast<int>(std::min<std::size_t>(n, img.pixels())), 10.0);
  const int segments = seg.empty() ? 0 : *std::max_element(seg.begin(), seg.end()) + 1;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(segments));
  for (std::size_t p = 0; p < seg.size(); ++p) {
    if (gt.data[p] != kIgnore) members[static_cast<std::size_t>(seg[p])].push_back(p);
  }
  std::vector<std::size_t> picks;
  for (const auto& m : members) {
    if (!m.empty()) picks.push_back(m[rng.below(m.size())]);
  }
  if (picks.size() > n) {
    // Keep a uniformly random n-subset, preserving segment order.
    std::vector<std::size_t> order(picks.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    order.resize(n);
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> kept;
    for (std::size_t i : order) kept.push_back(picks[i]);
    picks = std::move(kept);
  }
  SampleBuilder b(gt);
  for (std::size_t p : picks) b.add(p);
  b.fill_random(n, rng);
  return b.take();
}

SampleSet sample_geodesic(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng) {
  require_available(gt, n, "sample_geodesic");
  const auto labelled = labelled_pixels(gt);
  SampleBuilder b(gt);
  std::vector<std::size_t> sources{labelled[rng.below(labelled.size())]};
  b.add(sources.front());
  while (b.size() < n) {
    const DistanceField field = geodesic_field(img, sources);
    std::size_t best = gt.pixels();
    for (std::size_t p : labelled) {
      if (b.taken(p)) continue;
      if (best == gt.pixels() || field.data[p] > field.data[best]) best = p;
    }
    b.add(best);
    sources.push_back(best);
  }
  return b.take();
}

void save_samples_csv(const SampleSet& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "t,row,col,class\n";
  for (std::size_t t = 0; t < samples.entries.size(); ++t) {
    const auto& e = samples.entries[t];
    out << t << ',' << e.row << ',' << e.col << ',' << static_cast<int>(e.cls) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

SampleSet load_samples_csv(const std::filesystem::path& path, int height, int width, int batch) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != "t,row,col,class" && line != "t,row,col,class\r")) {
    throw FormatError(path.string() + ": expected header 't,row,col,class'");
  }
  SampleSet s;
  s.height = height;
  s.width = width;
  s.batch = batch;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    long long t, r, c, k;
    char c1, c2, c3;
    if (!(ss >> t >> c1 >> r >> c2 >> c >> c3 >> k) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw FormatError(path.string() + ": malformed line " + std::to_string(lineno));
    }
    if (t != static_cast<long long>(s.entries.size())) {
      throw FormatError(path.string() + ": order index on line " + std::to_string(lineno) + " is not contiguous");
    }
    if (r < 0 || r >= height || c < 0 || c >= width || k < 0 || k >= kIgnore) {
      throw FormatError(path.string() + ": value out of range on line " + std::to_string(lineno));
    }
    s.entries.push_back({static_cast<int>(r), static_cast<int>(c), static_cast<std::uint8_t>(k)});
  }
  return s;
}

void save_history_csv(const std::vector<HistoryPoint>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "n_samples,reward\n";
  for (const auto& h : history) out << h.samples << ',' << fmt_reward(h.reward) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace opl
