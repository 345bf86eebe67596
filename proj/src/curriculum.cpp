#include "opl/curriculum.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "opl/error.hpp"
#include "opl/rng.hpp"

namespace opl {
namespace {

// Grows the mask in `rounds`-sized steps over `order` and trains after each.
void train_rounds(ModelState& model, const ImageTensor& img, const SampleSet& samples,
                  const std::vector<std::size_t>& order, const std::vector<std::size_t>& rounds,
                  const TrainConfig& tcfg) {
  LabelMap sparse(samples.height, samples.width, model.preset.num_classes, kIgnore);
  std::vector<std::size_t> mask;
  mask.reserve(order.size());
  std::size_t next = 0;
  for (std::size_t round : rounds) {
    for (std::size_t i = 0; i < round; ++i, ++next) {
      const SampleEntry& e = samples.entries[order[next]];
      sparse.at(e.row, e.col) = e.cls;
      mask.push_back(samples.linear(e));
    }
    train_inner(model, img, sparse, mask, tcfg);
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string to_string(ReplayOrder order) {
  switch (order) {
    case ReplayOrder::kCorrect: return "correct";
    case ReplayOrder::kNoOrder: return "no_order";
    case ReplayOrder::kRandomOrder: return "random_order";
    case ReplayOrder::kReverse: return "reverse";
  }
  return "unknown";
}

ReplayOrder parse_replay_order(const std::string& name) {
  for (ReplayOrder o : kAllReplayOrders) {
    if (to_string(o) == name) return o;
  }
  throw ConfigError("unknown replay mode '" + name + "' (expected correct, no_order, random_order or reverse)");
}

void ReplayMode::validate() const {
  if (no_order_iters < 1) throw ConfigError("no_order_iters must be at least 1");
}

int equal_budget_iters(const SampleSet& samples, const TrainConfig& tcfg) {
  return static_cast<int>(samples.rounds().size()) * tcfg.inner_iters;
}

void train_on_schedule(ModelState& model, const ImageTensor& img, const SampleSet& samples,
                       const TrainConfig& tcfg) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  train_rounds(model, img, samples, order, samples.rounds(), tcfg);
}

ReplayResult replay(const ImageTensor& img, const LabelMap& gt, const SampleSet& samples,
                    const ReplayMode& mode, const ArchPreset& preset, std::uint64_t seed,
                    const TrainConfig& tcfg) {
  mode.validate();
  tcfg.validate();
  if (samples.entries.empty()) throw ValidationError("replay: empty sample set");
  if (img.height != samples.height || img.width != samples.width) {
    throw ShapeError("replay: sample set and image differ in size");
  }
  ModelState model = init_model(preset, seed);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  switch (mode.order) {
    case ReplayOrder::kCorrect:
      train_rounds(model, img, samples, order, samples.rounds(), tcfg);
      break;
    case ReplayOrder::kReverse:
      std::reverse(order.begin(), order.end());
      train_rounds(model, img, samples, order, samples.rounds(), tcfg);
      break;
    case ReplayOrder::kRandomOrder: {
      RngStream rng(mode.permutation_seed);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      train_rounds(model, img, samples, order, samples.rounds(), tcfg);
      break;
    }
    case ReplayOrder::kNoOrder: {
      TrainConfig full = tcfg;
      full.inner_iters = mode.no_order_iters;
      train_rounds(model, img, samples, order, {samples.size()}, full);
      break;
    }
  }

  ReplayResult result;
  result.prediction = predict(forward(model, img));
  result.metrics = metrics(confusion(result.prediction, gt));
  return result;
}

std::vector<StudyRow> transfer_study(const ImageTensor& img, const LabelMap& gt, const SampleSet& samples,
                                     const std::vector<ReplayOrder>& orders,
                                     const std::vector<std::uint64_t>& seeds, const ArchPreset& target,
                                     const TrainConfig& tcfg, int no_order_iters, const std::string& scene) {
  if (orders.empty()) throw ConfigError("transfer_study: empty mode list");
  if (seeds.empty()) throw ConfigError("transfer_study: empty seed list");
  std::vector<StudyRow> rows;
  for (ReplayOrder order : orders) {
    for (std::uint64_t seed : seeds) {
      ReplayMode mode{order, no_order_iters, seed};
      ReplayResult r = replay(img, gt, samples, mode, target, seed, tcfg);
      rows.push_back({scene, order, target.name, seed, r.metrics.miou, r.metrics.pixel_accuracy});
    }
  }
  return rows;
}

void save_study_csv(const std::vector<StudyRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "scene,mode,preset,seed,miou,pixel_acc\n";
  for (const auto& r : rows) {
    out << r.scene << ',' << to_string(r.order) << ',' << r.preset << ',' << r.seed << ',' << fmt(r.miou) << ','
        << fmt(r.pixel_accuracy) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<StudyRow> load_study_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("scene,mode,preset,seed,miou,pixel_acc", 0) != 0) {
    throw FormatError(path.string() + ": expected header 'scene,mode,preset,seed,miou,pixel_acc'");
  }
  std::vector<StudyRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw FormatError(path.string() + ": malformed row '" + line + "'");
    try {
      rows.push_back({f[0], parse_replay_order(f[1]), f[2], std::stoull(f[3]), std::stod(f[4]), std::stod(f[5])});
    } catch (const ConfigError& e) {
      throw FormatError(path.string() + ": " + e.what());
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

std::vector<ModeSummary> summarize_study(const std::vector<StudyRow>& rows) {
  std::vector<ModeSummary> out;
  for (ReplayOrder order : kAllReplayOrders) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.order == order) v.push_back(r.miou);
    }
    if (v.empty()) continue;
    ModeSummary s{order, 0.0, 0.0, v.size()};
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double x : v) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(v.size());
    out.push_back(s);
  }
  return out;
}

std::string study_markdown(const std::vector<ModeSummary>& summary) {
  std::string md = "| Method | mIoU (mean ± var) | n |\n|---|---|---|\n";
  for (const auto& s : summary) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "| %s | %.2f ± %.2f | %zu |\n", to_string(s.order).c_str(), s.mean, s.variance, s.n);
    md += buf;
  }
  return md;
}

}  // namespace opl
