#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "opl/error.hpp"

using namespace opl::cli;

namespace {

std::uint64_t env_seed() {
  const char* v = std::getenv("OPL_SEED");
  if (!v || !*v) return 0;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw opl::ConfigError(std::string("OPL_SEED is not an unsigned integer: ") + v);
  }
}

void add_common(CLI::App* sub, Common& c, bool needs_threads = true) {
  sub->add_option("--seed", c.seed, "Base seed (default: $OPL_SEED or 0)")->capture_default_str();
  if (needs_threads) sub->add_option("--threads", c.threads, "Worker threads across images/runs")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "Output directory")->required();
}

void add_oracle(CLI::App* sub, OracleOptions& o) {
  sub->add_option("--threshold", o.threshold, "Stop once the reward reaches T (percent)")->capture_default_str();
  sub->add_option("--batch", o.batch, "Pixels per acquisition round (1..10)")->capture_default_str();
  sub->add_option("--preset", o.preset, "Network preset")->capture_default_str()->check(CLI::IsMember({"micro-A", "micro-B"}));
  sub->add_option("--objective", o.objective, "Reward")->capture_default_str()->check(CLI::IsMember({"miou", "acc"}));
  sub->add_option("--lr", o.lr, "Adam learning rate of single-image training")->capture_default_str();
  sub->add_option("--inner-iters", o.inner_iters, "Optimizer steps per round")->capture_default_str();
}

void add_source(CLI::App* sub, SceneSource& s) {
  sub->add_option("--data", s.data, "Index CSV (image,label); synthetic scenes when absent");
  sub->add_option("--scenes", s.scenes, "Number of scenes")->capture_default_str();
  sub->add_option("--first-scene", s.first, "First scene index")->capture_default_str();
  sub->add_option("--size", s.size, "Synthetic scene side length")->capture_default_str();
  sub->add_option("--classes", s.classes, "Synthetic class count")->capture_default_str();
  sub->add_option("--scene-seed", s.scene_seed, "Synthetic generator seed")->capture_default_str();
}

int fail(int code, const std::string& what) {
  std::cerr << "error: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oracle pixel labeling experiments"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config; command-line flags take precedence");
  app.failure_message(CLI::FailureMessage::help);

  Common common;
  try {
    common.seed = env_seed();
  } catch (const opl::ConfigError& e) {
    return fail(2, e.what());
  }

  AnnotateOptions annotate;
  auto* a = app.add_subcommand("annotate", "Run the Oracle on one image");
  a->add_option("--image", annotate.image, "RGB image (PPM/PGM)")->required();
  a->add_option("--label", annotate.label, "Label map (PGM)")->required();
  a->add_option("--budget", annotate.budget, "Pixel budget as a fraction of the image")->capture_default_str();
  add_oracle(a, annotate.oracle);
  add_common(a, common);

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "Final mIoU over a list of pixel budgets");
  s->add_option("--budgets", sweep.budgets, "Budget fractions")->delimiter(',')->capture_default_str();
  s->add_option("--seeds", sweep.seeds, "Seeds per scene")->capture_default_str();
  add_source(s, sweep.source);
  add_oracle(s, sweep.oracle);
  add_common(s, common);

  OrderOptions order;
  auto* o = app.add_subcommand("order", "Replay acquisitions under the four training orders");
  o->add_option("--budget", order.budget, "Pixel budget fraction")->capture_default_str();
  o->add_option("--seeds", order.seeds, "Seeds per scene")->capture_default_str();
  o->add_option("--no-order-iters", order.no_order_iters, "Steps of the no_order mode")->capture_default_str();
  o->add_flag("--equal-budget", order.equal_budget, "Give no_order the step count of the batched schedule");
  o->add_option("--transfer-preset", order.transfer_preset, "Replay preset for the transfer study (empty: skip)")
      ->capture_default_str();
  add_source(o, order.source);
  add_oracle(o, order.oracle);
  add_common(o, common);

  BaselinesOptions baselines;
  auto* b = app.add_subcommand("baselines", "Compare the Oracle with the classic samplers");
  b->add_option("--budget", baselines.budget, "Pixel budget fraction")->capture_default_str();
  b->add_option("--seeds", baselines.seeds, "Seeds per scene")->capture_default_str();
  add_source(b, baselines.source);
  add_oracle(b, baselines.oracle);
  add_common(b, common);

  DatasetOptions dataset;
  auto* d = app.add_subcommand("dataset", "Three-stage self-training on a dataset");
  d->add_option("--train", dataset.train, "Training index CSV")->required();
  d->add_option("--test", dataset.test, "Test index CSV")->required();
  d->add_option("--fraction", dataset.fraction, "Share of training images given to the Oracle")->capture_default_str();
  d->add_option("--budget", dataset.budget, "Per-image pixel fraction or 'full'")->capture_default_str();
  d->add_option("--epochs", dataset.epochs, "Dataset-model epochs")->capture_default_str();
  d->add_option("--dataset-lr", dataset.dataset_lr, "Adam learning rate of dataset models")->capture_default_str();
  d->add_option("--warm-start", dataset.warm_start, "Checkpoint to initialise dataset models from");
  d->add_flag("!--no-reference", dataset.reference, "Skip the full-supervision reference");
  d->add_flag("!--no-naive", dataset.naive, "Skip the naive sparse baseline");
  add_oracle(d, dataset.oracle);
  add_common(d, common);

  GenDataOptions gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic train/test set");
  g->add_option("--train", gen.train, "Training scenes")->capture_default_str();
  g->add_option("--test", gen.test, "Test scenes")->capture_default_str();
  g->add_option("--size", gen.size, "Scene side length")->capture_default_str();
  g->add_option("--classes", gen.classes, "Class count")->capture_default_str();
  g->add_option("--scene-seed", gen.scene_seed, "Generator seed")->capture_default_str();
  add_common(g, common, false);

  ReportOptions report;
  auto* r = app.add_subcommand("report", "Fold result CSVs into markdown tables");
  r->add_option("--input,inputs", report.inputs, "CSV files")->required();
  r->add_option("--group", report.group, "Grouping column (default: mode, method, budget or run)");
  r->add_option("--value", report.value, "Aggregated column (default: miou or mean_miou)");
  add_common(r, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Manifest manifest;
  manifest.threads = common.threads;
  for (const auto* sub : app.get_subcommands()) manifest.config = sub->config_to_str(true, false);
  try {
    if (*a) {
      manifest.command = "annotate";
      run_annotate(annotate, common, manifest);
    } else if (*s) {
      manifest.command = "sweep";
      run_sweep(sweep, common, manifest);
    } else if (*o) {
      manifest.command = "order";
      run_order(order, common, manifest);
    } else if (*b) {
      manifest.command = "baselines";
      run_baselines(baselines, common, manifest);
    } else if (*d) {
      manifest.command = "dataset";
      run_dataset(dataset, common, manifest);
    } else if (*g) {
      manifest.command = "gen-data";
      run_gen_data(gen, common, manifest);
    } else {
      manifest.command = "report";
      run_report(report, common, manifest);
    }
  } catch (const opl::IoError& e) {
    return fail(3, e.what());
  } catch (const opl::FormatError& e) {
    return fail(3, e.what());
  } catch (const opl::Error& e) {
    return fail(2, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(3, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
