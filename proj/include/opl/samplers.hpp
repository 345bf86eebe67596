#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "opl/image.hpp"
#include "opl/micronet.hpp"
#include "opl/rng.hpp"
#include "opl/segmetrics.hpp"

namespace opl {

enum class Objective { kMiou, kPixelAccuracy };

Objective parse_objective(const std::string& name);  // "miou" | "acc"
std::string to_string(Objective objective);

struct SampleEntry {
  int row = 0;
  int col = 0;
  std::uint8_t cls = 0;
  friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

/// Revealed pixels in acquisition order (entry i has order index t = i).
/// `batch` is the acquisition batch size: the first entry forms a round of
/// its own, later rounds hold `batch` entries, the last one possibly fewer.
struct SampleSet {
  int height = 0;
  int width = 0;
  int batch = 5;
  std::vector<SampleEntry> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t linear(const SampleEntry& e) const { return static_cast<std::size_t>(e.row) * width + e.col; }
  std::vector<std::size_t> pixel_indices() const;
  BoolMap mask() const;
  /// Round sizes 1, batch, batch, ..., remainder covering all entries.
  std::vector<std::size_t> rounds() const;
  /// Labels of the revealed pixels, kIgnore elsewhere.
  LabelMap sparse_labels(int num_classes) const;
  /// Throws ValidationError on duplicates or labels that disagree with `gt`.
  void validate(const LabelMap& gt) const;

  friend bool operator==(const SampleSet&, const SampleSet&) = default;
};

/// Per-pixel sampling weights; sums to 1 over a non-empty support.
struct WeightMap {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  std::size_t support_size() const;
};

struct OracleConfig {
  std::size_t budget = 20;   // k, revealed pixels
  double threshold = 99.5;   // T, reward percent
  int batch = 5;             // b, pixels per round
  Objective objective = Objective::kMiou;
  std::uint64_t seed = 0;
  /// Restrict the mIoU weight map to the lowest-IoU class (off: plain largest component).
  bool restrict_to_lowest_class = true;

  void validate() const;
};

/// k = max(1, round(fraction * pixels)).
std::size_t budget_pixels(double fraction, std::size_t pixels);

/// Present class with the lowest IoU; ties go to the smallest index.
int lowest_iou_class(const MetricsReport& report);

WeightMap build_weight_map(const LabelMap& pred, const LabelMap& gt, Objective objective,
                           bool restrict_to_lowest_class = true);

/// Draws min(n, support) distinct pixels without replacement, proportionally
/// to the weights (renormalised after every draw).
std::vector<std::size_t> weighted_sample(const WeightMap& w, std::size_t n, RngStream& rng);

struct HistoryPoint {
  std::size_t samples = 0;
  double reward = 0.0;
};

enum class StopCause { kThreshold, kBudget, kExhausted };
std::string to_string(StopCause cause);

struct LabelingResult {
  SampleSet samples;
  LabelMap prediction;
  MetricsReport metrics;
  std::vector<HistoryPoint> history;
  StopCause cause = StopCause::kBudget;
  ModelState model;
};

/// The Oracle loop: seed with one uniform pixel, then alternate inner
/// training on the revealed pixels with weight-map sampling of the next
/// batch until the reward reaches the threshold or the budget is spent.
LabelingResult pixel_labeling(const ImageTensor& img, const LabelMap& gt, ModelState model,
                              const OracleConfig& cfg, const TrainConfig& tcfg);

// Classic baselines. Each returns exactly n entries or throws ValidationError
// when fewer than n labelled pixels exist.
SampleSet sample_random(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng);
SampleSet sample_uniform(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng);
SampleSet sample_edge(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng);
SampleSet sample_slic(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng);
SampleSet sample_geodesic(const ImageTensor& img, const LabelMap& gt, std::size_t n, RngStream& rng);

/// `t,row,col,class`
void save_samples_csv(const SampleSet& samples, const std::filesystem::path& path);
SampleSet load_samples_csv(const std::filesystem::path& path, int height, int width, int batch);
/// `n_samples,reward`
void save_history_csv(const std::vector<HistoryPoint>& history, const std::filesystem::path& path);

}  // namespace opl
