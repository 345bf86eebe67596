#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opl/dataset.hpp"
#include "opl/micronet.hpp"
#include "opl/samplers.hpp"
#include "opl/segmetrics.hpp"

namespace opl {

struct PipelineConfig {
  double fraction = 1.0;                   // share of training images annotated by the Oracle
  std::optional<double> pixel_budget;      // fraction of pixels per image; nullopt = "full"
  OracleConfig oracle;                     // budget is overwritten per image from pixel_budget
  TrainConfig oracle_train;                // single-image inner training
  TrainConfig dataset_train;               // dataset-model training (inner_iters unused)
  int epochs = 10;
  std::string preset = "micro-A";
  std::optional<std::filesystem::path> warm_start;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<std::filesystem::path> out_dir;  // stage artifacts when set
  std::function<void(const std::string& stage, int pct)> progress;

  void validate() const;
};

struct PseudoLabel {
  LabelMap label;
  std::size_t samples = 0;  // |S| revealed for this image (all pixels when "full")
  double single_image_miou = 100.0;
};

/// Stage 1: class-preserving subset plus one Oracle run per selected image.
struct AnnotatedSubset {
  DatasetIndex subset;
  std::vector<std::size_t> subset_rows;  // positions of the subset inside the training index
  std::vector<SampleSet> samples;        // every labelled pixel when the budget is "full"
  std::vector<PseudoLabel> pseudo;
};

struct PipelineResult {
  AnnotatedSubset stage1;
  std::vector<LabelMap> stage2_pseudo;  // labels for the training images outside the subset
  ConfusionCounts test_counts;
  MetricsReport test;                   // from the stage-3 model, dataset-level confusion
};

AnnotatedSubset annotate_subset(const DatasetIndex& train, const LoadedDataset& train_data, const PipelineConfig& cfg);

/// Three-stage self-training: annotate a subset, train on its pseudo labels and
/// pseudo-label the rest, retrain a fresh model on all pseudo labels, evaluate.
PipelineResult run_pipeline(const DatasetIndex& train, const DatasetIndex& test, const PipelineConfig& cfg);
/// Same, reusing a previously computed stage 1.
PipelineResult run_pipeline(const LoadedDataset& train_data, const LoadedDataset& test_data,
                            const AnnotatedSubset& stage1, const PipelineConfig& cfg);

/// Negative control: one dataset model trained directly on the sparse
/// SampleSets of the annotated subset (loss only on revealed pixels). Shares
/// the stage-3 model seed, so a full budget reproduces the supervised reference.
MetricsReport naive_sparse_baseline(const DatasetIndex& train, const DatasetIndex& test, const PipelineConfig& cfg);
MetricsReport naive_sparse_baseline(const LoadedDataset& train_data, const LoadedDataset& test_data,
                                    const AnnotatedSubset& stage1, const PipelineConfig& cfg);

/// Minibatch-1 Adam over `images` with the given per-image targets and masks.
ModelState train_dataset_model(const std::vector<const ImageTensor*>& images,
                               const std::vector<LabelMap>& targets,
                               const std::vector<std::vector<std::size_t>>& masks, const PipelineConfig& cfg,
                               std::uint64_t seed);

/// Confusion counts accumulated over every image of `data`.
ConfusionCounts evaluate_dataset(const ModelState& model, const LoadedDataset& data, int threads = 1);

}  // namespace opl
