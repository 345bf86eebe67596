#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manifest.hpp"

namespace opl::cli {

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
};

/// Scenes come from an index CSV when `data` is set, otherwise from the
/// synthetic generator.
struct SceneSource {
  std::string data;
  int scenes = 20;
  std::uint64_t first = 0;
  int size = 64;
  int classes = 4;
  std::uint64_t scene_seed = 7;
};

struct OracleOptions {
  double threshold = 99.5;
  int batch = 5;
  std::string preset = "micro-A";
  std::string objective = "miou";
  double lr = 5e-3;
  int inner_iters = 10;
};

struct AnnotateOptions {
  std::string image, label;
  double budget = 0.005;
  OracleOptions oracle;
};

struct SweepOptions {
  SceneSource source;
  std::vector<double> budgets{0.001, 0.002, 0.004};
  int seeds = 1;
  OracleOptions oracle;
};

struct OrderOptions {
  SceneSource source;
  double budget = 0.02;
  int seeds = 5;
  int no_order_iters = 200;
  bool equal_budget = false;
  std::string transfer_preset = "micro-B";
  OracleOptions oracle;
};

struct BaselinesOptions {
  SceneSource source;
  double budget = 0.005;
  int seeds = 3;
  OracleOptions oracle;
};

struct DatasetOptions {
  std::string train, test;
  double fraction = 1.0;
  std::string budget = "0.005";  // fraction of pixels or "full"
  int epochs = 10;
  double dataset_lr = 3e-3;
  std::string warm_start;
  bool reference = true;
  bool naive = true;
  OracleOptions oracle;
};

struct GenDataOptions {
  int train = 50;
  int test = 20;
  int size = 64;
  int classes = 4;
  std::uint64_t scene_seed = 7;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string group;
  std::string value;
};

void run_annotate(const AnnotateOptions& o, const Common& c, Manifest& m);
void run_sweep(const SweepOptions& o, const Common& c, Manifest& m);
void run_order(const OrderOptions& o, const Common& c, Manifest& m);
void run_baselines(const BaselinesOptions& o, const Common& c, Manifest& m);
void run_dataset(const DatasetOptions& o, const Common& c, Manifest& m);
void run_gen_data(const GenDataOptions& o, const Common& c, Manifest& m);
void run_report(const ReportOptions& o, const Common& c, Manifest& m);

}  // namespace opl::cli
