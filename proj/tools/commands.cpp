#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>

#include "opl/curriculum.hpp"
#include "opl/dataset.hpp"
#include "opl/error.hpp"
#include "opl/netpbm.hpp"
#include "opl/parallel.hpp"
#include "opl/pipeline.hpp"
#include "opl/samplers.hpp"
#include "opl/scene.hpp"

namespace fs = std::filesystem;

namespace opl::cli {
namespace {

struct Scene {
  std::string id;
  ImageTensor img;
  LabelMap gt;
};

// Thread-safe completion counter for one stage.
class Ticker {
 public:
  Ticker(Progress& progress, std::string stage, std::size_t total)
      : progress_(progress), stage_(std::move(stage)), total_(total) {
    progress_(stage_, 0);
  }
  void tick() {
    std::lock_guard lock(mutex_);
    ++done_;
    progress_(stage_, static_cast<int>(100 * done_ / total_));
  }

 private:
  Progress& progress_;
  std::string stage_;
  std::size_t total_;
  std::size_t done_ = 0;
  std::mutex mutex_;
};

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw IoError(std::string(flag) + ": no such file " + path);
}

struct MeanVar {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
};

MeanVar mean_var(const std::vector<double>& v) {
  MeanVar s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.var += (x - s.mean) * (x - s.mean);
  s.var /= static_cast<double>(v.size());
  return s;
}

std::string pm(const MeanVar& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.mean, s.var);
  return buf;
}

TrainConfig train_config(const OracleOptions& o) {
  TrainConfig t;
  t.learning_rate = o.lr;
  t.inner_iters = o.inner_iters;
  t.validate();
  return t;
}

OracleConfig oracle_config(const OracleOptions& o, std::size_t budget, std::uint64_t seed) {
  OracleConfig cfg;
  cfg.budget = budget;
  cfg.threshold = o.threshold;
  cfg.batch = o.batch;
  cfg.objective = parse_objective(o.objective);
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

std::vector<Scene> load_scenes(const SceneSource& s, Manifest& m) {
  if (s.scenes < 1) throw ConfigError("--scenes must be at least 1");
  std::vector<Scene> scenes;
  if (!s.data.empty()) {
    require_file(s.data, "--data");
    const DatasetIndex index = load_index(s.data);
    m.inputs.push_back(s.data);
    const std::size_t end = std::min(index.size(), static_cast<std::size_t>(s.first + s.scenes));
    if (s.first >= end) throw ConfigError("--first-scene lies beyond the index");
    for (std::size_t i = s.first; i < end; ++i) {
      const auto& e = index.entries[i];
      m.inputs.push_back(e.image);
      m.inputs.push_back(e.label);
      scenes.push_back({e.image.stem().string(), load_image(e.image), load_label(e.label)});
    }
    return scenes;
  }
  SceneSpec spec;
  spec.height = spec.width = s.size;
  spec.num_classes = s.classes;
  spec.seed = s.scene_seed;
  spec.validate();
  m.seeds["scene_seed"] = s.scene_seed;
  for (int i = 0; i < s.scenes; ++i) {
    auto [img, gt] = generate_scene(spec, s.first + static_cast<std::uint64_t>(i));
    char id[32];
    std::snprintf(id, sizeof id, "scene%04llu", static_cast<unsigned long long>(s.first + i));
    scenes.push_back({id, std::move(img), std::move(gt)});
  }
  return scenes;
}

// Run r covers scene r / seeds with seed base + r % seeds.
struct RunSlot {
  std::size_t scene;
  std::uint64_t seed;
};

std::vector<RunSlot> run_slots(std::size_t scenes, int seeds, std::uint64_t base) {
  if (seeds < 1) throw ConfigError("--seeds must be at least 1");
  std::vector<RunSlot> slots;
  for (std::size_t i = 0; i < scenes; ++i) {
    for (int k = 0; k < seeds; ++k) slots.push_back({i, base + static_cast<std::uint64_t>(k)});
  }
  return slots;
}

void record_seeds(Manifest& m, const Common& c, int seeds) {
  m.seeds["seed"] = c.seed;
  m.seeds["seed_count"] = static_cast<std::uint64_t>(seeds);
}

std::uint64_t oracle_seed(const RunSlot& r) { return RngStream(r.seed).derive(r.scene).next_u64(); }

LabelingResult acquire(const Scene& s, const RunSlot& r, const OracleOptions& o, double budget) {
  const ArchPreset preset = ArchPreset::from_name(o.preset, s.gt.num_classes);
  const OracleConfig cfg = oracle_config(o, budget_pixels(budget, s.gt.pixels()), oracle_seed(r));
  return pixel_labeling(s.img, s.gt, init_model(preset, r.seed), cfg, train_config(o));
}

void write_summary(const fs::path& csv, const fs::path& md, const std::string& key,
                   const std::vector<std::pair<std::string, std::vector<double>>>& groups) {
  auto out = open_out(csv);
  out << key << ",mean_miou,var_miou,n\n";
  auto table = open_out(md);
  table << "| " << key << " | mIoU (mean ± var) | n |\n|---|---|---|\n";
  for (const auto& [name, values] : groups) {
    const MeanVar s = mean_var(values);
    out << name << "," << fixed(s.mean) << "," << fixed(s.var) << "," << s.n << "\n";
    table << "| " << name << " | " << pm(s) << " | " << s.n << " |\n";
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void run_annotate(const AnnotateOptions& o, const Common& c, Manifest& m) {
  require_file(o.image, "--image");
  require_file(o.label, "--label");
  const ImageTensor img = load_image(o.image);
  const LabelMap gt = load_label(o.label);
  if (img.height != gt.height || img.width != gt.width) throw ShapeError("image and label differ in size");
  const ArchPreset preset = ArchPreset::from_name(o.oracle.preset, gt.num_classes);
  const OracleConfig cfg = oracle_config(o.oracle, budget_pixels(o.budget, gt.pixels()), c.seed);
  const TrainConfig tcfg = train_config(o.oracle);

  const fs::path out = c.out;
  m.seeds["seed"] = c.seed;
  m.inputs = {o.image, o.label};
  m.write(out);
  Progress progress;
  progress("annotate", 0);
  const LabelingResult r = pixel_labeling(img, gt, init_model(preset, c.seed), cfg, tcfg);
  save_samples_csv(r.samples, out / "samples.csv");
  save_history_csv(r.history, out / "history.csv");
  save_label(r.prediction, out / "pred.pgm");
  auto metrics_out = open_out(out / "metrics.csv");
  metrics_out << metrics_csv_header(gt.num_classes) << "\n"
              << metrics_csv_row(fs::path(o.image).stem().string(), r.metrics) << "\n";
  progress("annotate", 100);
  m.write(out, &progress);
  std::cerr << "annotate: " << r.samples.size() << " pixels, mIoU " << fixed(r.metrics.miou) << ", stopped on "
            << to_string(r.cause) << "\n";
}

void run_sweep(const SweepOptions& o, const Common& c, Manifest& m) {
  if (o.budgets.empty()) throw ConfigError("--budgets must list at least one budget");
  for (double b : o.budgets) budget_pixels(b, 1);
  const auto scenes = load_scenes(o.source, m);
  const auto slots = run_slots(scenes.size(), o.seeds, c.seed);
  record_seeds(m, c, o.seeds);
  m.write(c.out);

  Progress progress;
  const std::size_t per_budget = slots.size();
  std::vector<LabelingResult> results(o.budgets.size() * per_budget);
  Ticker ticker(progress, "sweep", results.size());
  parallel_for(results.size(), c.threads, [&](std::size_t i) {
    const RunSlot& r = slots[i % per_budget];
    results[i] = acquire(scenes[r.scene], r, o.oracle, o.budgets[i / per_budget]);
    ticker.tick();
  });

  auto runs = open_out(fs::path(c.out) / "sweep_runs.csv");
  runs << "scene,seed,budget,samples,miou\n";
  auto summary = open_out(fs::path(c.out) / "sweep.csv");
  summary << "budget,mean_miou,var_miou,n\n";
  for (std::size_t b = 0; b < o.budgets.size(); ++b) {
    std::vector<double> values;
    for (std::size_t k = 0; k < per_budget; ++k) {
      const auto& res = results[b * per_budget + k];
      const RunSlot& r = slots[k];
      runs << scenes[r.scene].id << "," << r.seed << "," << short_num(o.budgets[b]) << "," << res.samples.size()
           << "," << fixed(res.metrics.miou) << "\n";
      values.push_back(res.metrics.miou);
    }
    const MeanVar s = mean_var(values);
    summary << short_num(o.budgets[b]) << "," << fixed(s.mean) << "," << fixed(s.var) << "," << s.n << "\n";
    std::cerr << "budget " << short_num(o.budgets[b]) << ": " << pm(s) << "\n";
  }
  m.write(c.out, &progress);
}

void run_order(const OrderOptions& o, const Common& c, Manifest& m) {
  const auto scenes = load_scenes(o.source, m);
  const auto slots = run_slots(scenes.size(), o.seeds, c.seed);
  const TrainConfig tcfg = train_config(o.oracle);
  if (o.no_order_iters < 1) throw ConfigError("--no-order-iters must be at least 1");
  const int classes = scenes.front().gt.num_classes;
  const ArchPreset source = ArchPreset::from_name(o.oracle.preset, classes);
  const bool transfer = !o.transfer_preset.empty();
  const ArchPreset target = transfer ? ArchPreset::from_name(o.transfer_preset, classes) : source;
  record_seeds(m, c, o.seeds);
  m.write(c.out);

  Progress progress;
  const std::vector<ReplayOrder> orders(std::begin(kAllReplayOrders), std::end(kAllReplayOrders));
  std::vector<std::vector<StudyRow>> same(slots.size()), moved(slots.size());
  Ticker ticker(progress, "order", slots.size());
  parallel_for(slots.size(), c.threads, [&](std::size_t i) {
    const RunSlot& r = slots[i];
    const Scene& s = scenes[r.scene];
    const LabelingResult acquired = acquire(s, r, o.oracle, o.budget);
    const int iters = o.equal_budget ? equal_budget_iters(acquired.samples, tcfg) : o.no_order_iters;
    same[i] = transfer_study(s.img, s.gt, acquired.samples, orders, {r.seed}, source, tcfg, iters, s.id);
    if (transfer) moved[i] = transfer_study(s.img, s.gt, acquired.samples, orders, {r.seed}, target, tcfg, iters, s.id);
    ticker.tick();
  });

  auto emit = [&](const std::vector<std::vector<StudyRow>>& per_run, const std::string& name) {
    std::vector<StudyRow> rows;
    for (const auto& v : per_run) rows.insert(rows.end(), v.begin(), v.end());
    save_study_csv(rows, fs::path(c.out) / (name + ".csv"));
    const std::string md = study_markdown(summarize_study(rows));
    open_out(fs::path(c.out) / (name + ".md")) << md;
    std::cerr << name << " (" << rows.front().preset << ")\n" << md;
  };
  emit(same, "order");
  if (transfer) emit(moved, "transfer");
  m.write(c.out, &progress);
}

void run_baselines(const BaselinesOptions& o, const Common& c, Manifest& m) {
  const auto scenes = load_scenes(o.source, m);
  const auto slots = run_slots(scenes.size(), o.seeds, c.seed);
  const TrainConfig tcfg = train_config(o.oracle);
  record_seeds(m, c, o.seeds);
  m.write(c.out);

  using Sampler = SampleSet (*)(const ImageTensor&, const LabelMap&, std::size_t, RngStream&);
  const std::vector<std::pair<std::string, Sampler>> classic = {
      {"slic", sample_slic},     {"uniform", sample_uniform},   {"random", sample_random},
      {"edge", sample_edge},     {"geodesic", sample_geodesic},
  };
  struct Outcome {
    std::size_t samples;
    MetricsReport metrics;
  };
  const std::size_t methods = classic.size() + 1;
  std::vector<Outcome> outcomes(slots.size() * methods);

  Progress progress;
  Ticker ticker(progress, "baselines", slots.size());
  parallel_for(slots.size(), c.threads, [&](std::size_t i) {
    const RunSlot& r = slots[i];
    const Scene& s = scenes[r.scene];
    const LabelingResult oracle = acquire(s, r, o.oracle, o.budget);
    outcomes[i * methods] = {oracle.samples.size(), oracle.metrics};
    const ArchPreset preset = ArchPreset::from_name(o.oracle.preset, s.gt.num_classes);
    const std::size_t k = budget_pixels(o.budget, s.gt.pixels());
    for (std::size_t j = 0; j < classic.size(); ++j) {
      RngStream rng = RngStream(r.seed).derive(r.scene).derive(j + 1);
      SampleSet picked = classic[j].second(s.img, s.gt, k, rng);
      picked.batch = o.oracle.batch;
      ModelState model = init_model(preset, r.seed);
      train_on_schedule(model, s.img, picked, tcfg);
      outcomes[i * methods + j + 1] = {picked.size(), metrics(confusion(predict(forward(model, s.img)), s.gt))};
    }
    ticker.tick();
  });

  std::vector<std::string> names{"pixel_labeling"};
  for (const auto& [name, fn] : classic) names.push_back(name);
  auto runs = open_out(fs::path(c.out) / "baselines_runs.csv");
  runs << "scene,method,seed,samples,miou,pixel_acc\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (const auto& n : names) groups.push_back({n, {}});
  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (std::size_t j = 0; j < methods; ++j) {
      const Outcome& out = outcomes[i * methods + j];
      runs << scenes[slots[i].scene].id << "," << names[j] << "," << slots[i].seed << "," << out.samples << ","
           << fixed(out.metrics.miou) << "," << fixed(out.metrics.pixel_accuracy) << "\n";
      groups[j].second.push_back(out.metrics.miou);
    }
  }
  write_summary(fs::path(c.out) / "baselines.csv", fs::path(c.out) / "baselines.md", "method", groups);
  for (const auto& [name, values] : groups) std::cerr << name << ": " << pm(mean_var(values)) << "\n";
  m.write(c.out, &progress);
}

void run_dataset(const DatasetOptions& o, const Common& c, Manifest& m) {
  require_file(o.train, "--train");
  require_file(o.test, "--test");
  const DatasetIndex train = load_index(o.train), test = load_index(o.test);

  Progress progress;
  PipelineConfig cfg;
  cfg.fraction = o.fraction;
  if (o.budget != "full") {
    try {
      std::size_t used = 0;
      cfg.pixel_budget = std::stod(o.budget, &used);
      if (used != o.budget.size()) throw std::invalid_argument(o.budget);
    } catch (const std::logic_error&) {
      throw ConfigError("--budget must be a pixel fraction or 'full', got '" + o.budget + "'");
    }
  }
  cfg.oracle = oracle_config(o.oracle, 1, 0);
  cfg.oracle_train = train_config(o.oracle);
  cfg.dataset_train.learning_rate = o.dataset_lr;
  cfg.epochs = o.epochs;
  cfg.preset = o.oracle.preset;
  if (!o.warm_start.empty()) {
    require_file(o.warm_start, "--warm-start");
    cfg.warm_start = o.warm_start;
  }
  cfg.seed = c.seed;
  cfg.threads = c.threads;
  cfg.out_dir = fs::path(c.out);
  cfg.progress = [&](const std::string& stage, int pct) { progress(stage, pct); };
  cfg.validate();

  m.seeds["seed"] = c.seed;
  m.inputs = {o.train, o.test};
  for (const auto* index : {&train, &test}) {
    for (const auto& e : index->entries) {
      m.inputs.push_back(e.image);
      m.inputs.push_back(e.label);
    }
  }
  if (cfg.warm_start) m.inputs.push_back(*cfg.warm_start);
  m.write(c.out);

  const PipelineResult result = run_pipeline(train, test, cfg);
  std::vector<std::pair<std::string, MetricsReport>> rows{{"pipeline", result.test}};

  const LoadedDataset train_data = load_dataset(train), test_data = load_dataset(test);
  if (o.naive) {
    progress("naive", 0);
    rows.emplace_back("naive", naive_sparse_baseline(train_data, test_data, result.stage1, cfg));
    progress("naive", 100);
  }
  if (o.reference) {
    PipelineConfig ref = cfg;
    ref.fraction = 1.0;
    ref.pixel_budget.reset();
    ref.out_dir.reset();
    ref.progress = [&](const std::string& stage, int pct) { progress("reference_" + stage, pct); };
    const AnnotatedSubset full = annotate_subset(train, train_data, ref);
    rows.emplace_back("reference", run_pipeline(train_data, test_data, full, ref).test);
  }

  const int classes = train_data.labels.front().num_classes;
  auto out = open_out(fs::path(c.out) / "dataset.csv");
  out << "run" << metrics_csv_header(classes).substr(std::string("image_id").size()) << "\n";
  auto md = open_out(fs::path(c.out) / "dataset.md");
  md << "| run | mIoU | pixel acc |\n|---|---|---|\n";
  for (const auto& [name, report] : rows) {
    out << metrics_csv_row(name, report) << "\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f |\n", name.c_str(), report.miou, report.pixel_accuracy);
    md << buf;
    std::cerr << name << ": mIoU " << fixed(report.miou) << "\n";
  }

  auto stage1 = open_out(fs::path(c.out) / "stage1.csv");
  stage1 << "row,samples,miou\n";
  for (std::size_t k = 0; k < result.stage1.subset_rows.size(); ++k) {
    stage1 << result.stage1.subset_rows[k] << "," << result.stage1.pseudo[k].samples << ","
           << fixed(result.stage1.pseudo[k].single_image_miou) << "\n";
  }
  m.write(c.out, &progress);
}

void run_gen_data(const GenDataOptions& o, const Common& c, Manifest& m) {
  if (o.train < 1 || o.test < 0) throw ConfigError("--train must be positive and --test non-negative");
  SceneSpec spec;
  spec.height = spec.width = o.size;
  spec.num_classes = o.classes;
  spec.seed = o.scene_seed;
  spec.validate();
  m.seeds["scene_seed"] = o.scene_seed;
  m.write(c.out);
  Progress progress;
  progress("gen-data", 0);
  write_synthetic_dataset(spec, 0, static_cast<std::size_t>(o.train), c.out, "train_");
  if (o.test > 0) {
    write_synthetic_dataset(spec, static_cast<std::uint64_t>(o.train), static_cast<std::size_t>(o.test), c.out,
                            "test_");
  }
  progress("gen-data", 100);
  m.write(c.out, &progress);
}

void run_report(const ReportOptions& o, const Common& c, Manifest& m) {
  if (o.inputs.empty()) throw ConfigError("report needs at least one CSV");
  for (const auto& in : o.inputs) require_file(in, "--input");
  m.inputs.assign(o.inputs.begin(), o.inputs.end());
  m.write(c.out);

  Progress progress;
  progress("report", 0);
  std::string md;
  for (const auto& path : o.inputs) {
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    const auto header = split(line);
    auto column = [&](const std::string& wanted, std::initializer_list<const char*> fallbacks) -> int {
      if (!wanted.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
          if (header[i] == wanted) return static_cast<int>(i);
        }
        throw ConfigError(path + ": no column '" + wanted + "'");
      }
      for (const char* f : fallbacks) {
        for (std::size_t i = 0; i < header.size(); ++i) {
          if (header[i] == f) return static_cast<int>(i);
        }
      }
      return -1;
    };
    const int group = column(o.group, {"mode", "method", "budget", "run"});
    const int value = column(o.value, {"miou", "mean_miou"});
    if (group < 0 || value < 0) throw FormatError(path + ": cannot tell which columns to aggregate");
    int preset = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "preset") preset = static_cast<int>(i);
    }

    std::vector<std::pair<std::string, std::vector<double>>> groups;
    std::map<std::string, std::size_t> slot;
    std::map<std::string, int> presets;
    std::vector<std::vector<std::string>> rows;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
      if (line.empty()) continue;
      auto f = split(line);
      if (f.size() != header.size()) throw FormatError(path + ": line " + std::to_string(lineno) + " has the wrong width");
      if (preset >= 0) presets[f[preset]] = 1;
      rows.push_back(std::move(f));
    }
    for (const auto& f : rows) {
      std::string key = f[group];
      if (presets.size() > 1) key = f[preset] + " / " + key;
      auto [it, fresh] = slot.emplace(key, groups.size());
      if (fresh) groups.push_back({key, {}});
      try {
        groups[it->second].second.push_back(std::stod(f[value]));
      } catch (const std::logic_error&) {
        throw FormatError(path + ": non-numeric value '" + f[value] + "'");
      }
    }

    md += "### " + fs::path(path).filename().string() + "\n\n";
    md += "| " + header[group] + " | " + header[value] + " (mean ± var) | n |\n|---|---|---|\n";
    for (const auto& [key, values] : groups) {
      const MeanVar s = mean_var(values);
      md += "| " + key + " | " + pm(s) + " | " + std::to_string(s.n) + " |\n";
    }
    md += "\n";
  }
  open_out(fs::path(c.out) / "report.md") << md;
  std::cerr << md;
  progress("report", 100);
  m.write(c.out, &progress);
}

}  // namespace opl::cli
