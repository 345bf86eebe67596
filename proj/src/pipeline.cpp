#include "opl/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "opl/error.hpp"
#include "opl/netpbm.hpp"
#include "opl/parallel.hpp"
#include "opl/rng.hpp"

namespace opl {
namespace {

constexpr std::uint64_t kStage1Stream = 1;
constexpr std::uint64_t kStage2Stream = 2;
constexpr std::uint64_t kStage3Stream = 3;

ModelState initial_model(const PipelineConfig& cfg, int num_classes, std::uint64_t seed) {
  const ArchPreset preset = ArchPreset::from_name(cfg.preset, num_classes);
  if (!cfg.warm_start) return init_model(preset, seed);
  ModelState warm = load_checkpoint(*cfg.warm_start, preset);
  ModelState model = init_model(preset, seed);
  model.params = std::move(warm.params);
  return model;
}

void report(const PipelineConfig& cfg, const std::string& stage, int pct) {
  if (cfg.progress) cfg.progress(stage, pct);
}

std::string stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

void check_compatible(const LoadedDataset& train, const LoadedDataset& test) {
  if (train.size() == 0) throw ValidationError("pipeline: empty training set");
  if (test.size() == 0) throw ValidationError("pipeline: empty test set");
  const int classes = train.labels.front().num_classes;
  for (const auto* set : {&train, &test}) {
    for (std::size_t i = 0; i < set->size(); ++i) {
      if (set->labels[i].num_classes != classes) throw ShapeError("pipeline: class counts differ across images");
      if (set->images[i].height != set->labels[i].height || set->images[i].width != set->labels[i].width) {
        throw ShapeError("pipeline: image/label size mismatch");
      }
    }
  }
}

void check_disjoint(const DatasetIndex& train, const DatasetIndex& test) {
  for (const auto& a : train.entries) {
    for (const auto& b : test.entries) {
      if (a.image == b.image || a.label == b.label) {
        throw ValidationError("pipeline: train and test share " + a.image.string());
      }
    }
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("dataset fraction must lie in (0,1]");
  if (pixel_budget && !(*pixel_budget > 0.0 && *pixel_budget <= 1.0)) {
    throw ConfigError("per-image pixel budget must lie in (0,1]");
  }
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  oracle_train.validate();
  dataset_train.validate();
}

AnnotatedSubset annotate_subset(const DatasetIndex& train, const LoadedDataset& train_data, const PipelineConfig& cfg) {
  cfg.validate();
  if (train.entries.empty()) throw ValidationError("pipeline: empty training index");
  AnnotatedSubset out;
  out.subset = select_subset_class_preserving(train, cfg.fraction, RngStream(cfg.seed).derive(0).next_u64());
  for (const auto& e : out.subset.entries) {
    for (std::size_t i = 0; i < train.entries.size(); ++i) {
      if (train.entries[i].image == e.image && train.entries[i].label == e.label) {
        out.subset_rows.push_back(i);
        break;
      }
    }
  }
  const std::size_t n = out.subset_rows.size();
  out.samples.resize(n);
  out.pseudo.resize(n);
  std::atomic<std::size_t> done{0};
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    const std::size_t row = out.subset_rows[k];
    const ImageTensor& img = train_data.images[row];
    const LabelMap& gt = train_data.labels[row];
    if (!cfg.pixel_budget) {
      SampleSet all{gt.height, gt.width, cfg.oracle.batch, {}};
      for (std::size_t p = 0; p < gt.pixels(); ++p) {
        if (gt.data[p] != kIgnore) {
          all.entries.push_back({static_cast<int>(p / static_cast<std::size_t>(gt.width)),
                                 static_cast<int>(p % static_cast<std::size_t>(gt.width)), gt.data[p]});
        }
      }
      out.pseudo[k] = {gt, all.size(), 100.0};
      out.samples[k] = std::move(all);
    } else {
      OracleConfig ocfg = cfg.oracle;
      ocfg.budget = budget_pixels(*cfg.pixel_budget, gt.pixels());
      const RngStream stream = RngStream(cfg.seed).derive(kStage1Stream).derive(row);
      ocfg.seed = stream.derive(0).next_u64();
      ModelState model = initial_model(cfg, gt.num_classes, stream.derive(1).next_u64());
      LabelingResult r = pixel_labeling(img, gt, std::move(model), ocfg, cfg.oracle_train);
      out.pseudo[k] = {r.prediction, r.samples.size(), r.metrics.miou};
      out.samples[k] = std::move(r.samples);
    }
    report(cfg, "stage1", static_cast<int>(100 * ++done / n));
  });

  if (cfg.out_dir) {
    std::filesystem::create_directories(*cfg.out_dir / "pseudo");
    std::filesystem::create_directories(*cfg.out_dir / "samples");
    for (std::size_t k = 0; k < n; ++k) {
      const std::string name = stem(out.subset_rows[k]);
      save_label(out.pseudo[k].label, *cfg.out_dir / "pseudo" / (name + ".pgm"));
      save_samples_csv(out.samples[k], *cfg.out_dir / "samples" / (name + ".csv"));
    }
  }
  return out;
}

ModelState train_dataset_model(const std::vector<const ImageTensor*>& images,
                               const std::vector<LabelMap>& targets,
                               const std::vector<std::vector<std::size_t>>& masks, const PipelineConfig& cfg,
                               std::uint64_t seed) {
  if (images.empty()) throw ValidationError("dataset training: no images");
  if (images.size() != targets.size() || images.size() != masks.size()) {
    throw ShapeError("dataset training: images, targets and masks differ in count");
  }
  ModelState model = initial_model(cfg, targets.front().num_classes, seed);
  RngStream order_rng = RngStream(seed).derive(99);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    for (std::size_t i : order) {
      if (masks[i].empty()) continue;
      auto lg = loss_and_gradients(model, *images[i], targets[i], masks[i]);
      adam_step(model, lg.gradients, cfg.dataset_train);
    }
  }
  return model;
}

ConfusionCounts evaluate_dataset(const ModelState& model, const LoadedDataset& data, int threads) {
  std::vector<ConfusionCounts> per_image(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    per_image[i] = confusion(predict(forward(model, data.images[i])), data.labels[i]);
  });
  ConfusionCounts total(model.preset.num_classes);
  for (const auto& c : per_image) total += c;
  return total;
}

PipelineResult run_pipeline(const LoadedDataset& train_data, const LoadedDataset& test_data,
                            const AnnotatedSubset& stage1, const PipelineConfig& cfg) {
  cfg.validate();
  check_compatible(train_data, test_data);
  if (stage1.subset_rows.empty()) throw ValidationError("pipeline: empty annotated subset");
  PipelineResult result;
  result.stage1 = stage1;

  // Stage 2: dataset model on the annotated subset, then pseudo-label the rest.
  std::vector<const ImageTensor*> images;
  std::vector<LabelMap> targets;
  std::vector<std::vector<std::size_t>> masks;
  std::vector<bool> in_subset(train_data.size(), false);
  for (std::size_t k = 0; k < stage1.subset_rows.size(); ++k) {
    in_subset[stage1.subset_rows[k]] = true;
    images.push_back(&train_data.images[stage1.subset_rows[k]]);
    targets.push_back(stage1.pseudo[k].label);
    masks.push_back(full_mask(targets.back()));
  }
  report(cfg, "stage2", 0);
  const ModelState stage2 = train_dataset_model(images, targets, masks, cfg, RngStream(cfg.seed).derive(kStage2Stream).next_u64());
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < train_data.size(); ++i) {
    if (!in_subset[i]) rest.push_back(i);
  }
  result.stage2_pseudo.resize(rest.size());
  parallel_for(rest.size(), cfg.threads, [&](std::size_t k) {
    result.stage2_pseudo[k] = predict(forward(stage2, train_data.images[rest[k]]));
  });
  for (std::size_t k = 0; k < rest.size(); ++k) {
    images.push_back(&train_data.images[rest[k]]);
    targets.push_back(result.stage2_pseudo[k]);
    masks.push_back(full_mask(targets.back()));
  }
  report(cfg, "stage2", 100);

  // Stage 3: fresh model on every pseudo label.
  report(cfg, "stage3", 0);
  const ModelState stage3 = train_dataset_model(images, targets, masks, cfg, RngStream(cfg.seed).derive(kStage3Stream).next_u64());
  result.test_counts = evaluate_dataset(stage3, test_data, cfg.threads);
  result.test = metrics(result.test_counts);
  report(cfg, "stage3", 100);

  if (cfg.out_dir) {
    std::filesystem::create_directories(*cfg.out_dir / "pseudo");
    std::filesystem::create_directories(*cfg.out_dir / "ckpt");
    for (std::size_t k = 0; k < rest.size(); ++k) {
      save_label(result.stage2_pseudo[k], *cfg.out_dir / "pseudo" / (stem(rest[k]) + ".pgm"));
    }
    save_checkpoint(stage2, *cfg.out_dir / "ckpt" / "stage2.mnet");
    save_checkpoint(stage3, *cfg.out_dir / "ckpt" / "stage3.mnet");
  }
  return result;
}

PipelineResult run_pipeline(const DatasetIndex& train, const DatasetIndex& test, const PipelineConfig& cfg) {
  cfg.validate();
  if (train.entries.empty()) throw ValidationError("pipeline: empty training index");
  if (test.entries.empty()) throw ValidationError("pipeline: empty test index");
  check_disjoint(train, test);
  const LoadedDataset train_data = load_dataset(train);
  const LoadedDataset test_data = load_dataset(test);
  check_compatible(train_data, test_data);
  const AnnotatedSubset stage1 = annotate_subset(train, train_data, cfg);
  return run_pipeline(train_data, test_data, stage1, cfg);
}

MetricsReport naive_sparse_baseline(const LoadedDataset& train_data, const LoadedDataset& test_data,
                                    const AnnotatedSubset& stage1, const PipelineConfig& cfg) {
  cfg.validate();
  check_compatible(train_data, test_data);
  if (stage1.subset_rows.empty()) throw ValidationError("naive baseline: empty annotated subset");
  std::vector<const ImageTensor*> images;
  std::vector<LabelMap> targets;
  std::vector<std::vector<std::size_t>> masks;
  for (std::size_t k = 0; k < stage1.subset_rows.size(); ++k) {
    images.push_back(&train_data.images[stage1.subset_rows[k]]);
    targets.push_back(stage1.samples[k].sparse_labels(train_data.labels.front().num_classes));
    masks.push_back(stage1.samples[k].pixel_indices());
  }
  const ModelState model = train_dataset_model(images, targets, masks, cfg, RngStream(cfg.seed).derive(kStage3Stream).next_u64());
  return metrics(evaluate_dataset(model, test_data, cfg.threads));
}

MetricsReport naive_sparse_baseline(const DatasetIndex& train, const DatasetIndex& test, const PipelineConfig& cfg) {
  cfg.validate();
  if (train.entries.empty()) throw ValidationError("naive baseline: empty training index");
  if (test.entries.empty()) throw ValidationError("naive baseline: empty test index");
  check_disjoint(train, test);
  const LoadedDataset train_data = load_dataset(train);
  const LoadedDataset test_data = load_dataset(test);
  check_compatible(train_data, test_data);
  const AnnotatedSubset stage1 = annotate_subset(train, train_data, cfg);
  return naive_sparse_baseline(train_data, test_data, stage1, cfg);
}

}  // namespace opl
