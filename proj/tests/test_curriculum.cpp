#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "opl/curriculum.hpp"
#include "opl/error.hpp"
#include "opl/scene.hpp"

using namespace opl;

namespace {

TrainConfig fast_training() {
  TrainConfig t;
  t.learning_rate = 5e-3;
  return t;
}

std::pair<ImageTensor, LabelMap> small_scene(std::uint64_t index) {
  SceneSpec spec;
  spec.height = 24;
  spec.width = 24;
  return generate_scene(spec, index);
}

SampleSet pick(const LabelMap& gt, int batch, std::vector<std::pair<int, int>> pixels) {
  SampleSet s{gt.height, gt.width, batch, {}};
  for (auto [r, c] : pixels) s.entries.push_back({r, c, gt.at(r, c)});
  return s;
}

}  // namespace

TEST_CASE("replay order names round-trip") {
  for (auto order : kAllReplayOrders) CHECK(parse_replay_order(to_string(order)) == order);
  CHECK_THROWS_AS(parse_replay_order("sideways"), ConfigError);
  ReplayMode mode;
  mode.no_order_iters = 0;
  CHECK_THROWS_AS(mode.validate(), ConfigError);
}

TEST_CASE("a single round has only one order") {
  const auto [img, gt] = small_scene(2);
  const SampleSet s = pick(gt, 5, {{3, 4}});
  const auto preset = ArchPreset::micro_a(4);
  ReplayMode correct{ReplayOrder::kCorrect}, random{ReplayOrder::kRandomOrder, 200, 9}, reverse{ReplayOrder::kReverse};
  const auto a = replay(img, gt, s, correct, preset, 4, fast_training());
  const auto b = replay(img, gt, s, random, preset, 4, fast_training());
  const auto c = replay(img, gt, s, reverse, preset, 4, fast_training());
  CHECK(a.prediction == b.prediction);
  CHECK(a.prediction == c.prediction);
  CHECK(a.metrics.miou == c.metrics.miou);
}

TEST_CASE("orders differ once there are several rounds") {
  const auto [img, gt] = small_scene(2);
  const SampleSet s = pick(gt, 2, {{1, 1}, {5, 20}, {12, 12}, {20, 3}, {22, 22}});
  const auto preset = ArchPreset::micro_a(4);
  const auto a = replay(img, gt, s, {ReplayOrder::kCorrect}, preset, 4, fast_training());
  const auto b = replay(img, gt, s, {ReplayOrder::kReverse}, preset, 4, fast_training());
  ModelState m1 = init_model(preset, 4), m2 = m1;
  train_on_schedule(m1, img, s, fast_training());
  CHECK(predict(forward(m1, img)) == a.prediction);
  SampleSet reversed = s;
  std::ranges::reverse(reversed.entries);
  train_on_schedule(m2, img, reversed, fast_training());
  CHECK(predict(forward(m2, img)) == b.prediction);
}

TEST_CASE("equal-budget no_order iterations") {
  const LabelMap gt(8, 8, 2, 0);
  SampleSet s{8, 8, 5, {}};
  for (int i = 0; i < 12; ++i) s.entries.push_back({i / 8, i % 8, 0});
  TrainConfig t;
  CHECK(s.rounds().size() == 4);
  CHECK(equal_budget_iters(s, t) == 40);
  t.inner_iters = 3;
  CHECK(equal_budget_iters(s, t) == 12);
}

TEST_CASE("correct replay with the acquisition seed reproduces the Oracle run") {
  const auto [img, gt] = small_scene(6);
  const auto preset = ArchPreset::micro_a(4);
  OracleConfig cfg;
  cfg.budget = 16;
  cfg.threshold = 101.0;
  cfg.seed = 3;
  const auto acquired = pixel_labeling(img, gt, init_model(preset, 11), cfg, fast_training());
  REQUIRE(acquired.samples.size() >= 16);
  const auto replayed = replay(img, gt, acquired.samples, {ReplayOrder::kCorrect}, preset, 11, fast_training());
  CHECK(replayed.prediction == acquired.prediction);
  CHECK(replayed.metrics.miou == acquired.metrics.miou);
}

TEST_CASE("replay is deterministic and rejects empty sets") {
  const auto [img, gt] = small_scene(1);
  const SampleSet s = pick(gt, 2, {{0, 0}, {10, 10}, {20, 5}});
  const auto preset = ArchPreset::micro_b(4);
  const ReplayMode mode{ReplayOrder::kRandomOrder, 200, 5};
  const auto a = replay(img, gt, s, mode, preset, 8, fast_training());
  const auto b = replay(img, gt, s, mode, preset, 8, fast_training());
  CHECK(a.prediction == b.prediction);
  CHECK_THROWS_AS(replay(img, gt, SampleSet{24, 24, 5, {}}, mode, preset, 8, fast_training()), ValidationError);

  const ReplayMode no_order{ReplayOrder::kNoOrder, 7};
  ModelState m = init_model(preset, 8);
  for (int i = 0; i < 7; ++i) {
    const auto mask = s.pixel_indices();
    TrainConfig one = fast_training();
    one.inner_iters = 1;
    train_inner(m, img, s.sparse_labels(4), mask, one);
  }
  CHECK(replay(img, gt, s, no_order, preset, 8, fast_training()).prediction == predict(forward(m, img)));
}

TEST_CASE("transfer study rows, determinism and errors") {
  const auto [img, gt] = small_scene(4);
  const SampleSet s = pick(gt, 2, {{2, 2}, {8, 17}, {15, 6}, {21, 21}});
  const std::vector<ReplayOrder> orders(std::begin(kAllReplayOrders), std::end(kAllReplayOrders));
  const auto target = ArchPreset::micro_b(4);
  const auto rows = transfer_study(img, gt, s, orders, {1, 2}, target, fast_training(), 20, "s4");
  CHECK(rows.size() == 8);
  for (const auto& r : rows) {
    CHECK(r.scene == "s4");
    CHECK(r.preset == target.name);
  }
  const auto again = transfer_study(img, gt, s, orders, {1, 2}, target, fast_training(), 20, "s4");
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].miou == again[i].miou);

  CHECK_THROWS_AS(transfer_study(img, gt, s, {}, {1}, target, fast_training()), ConfigError);
  CHECK_THROWS_AS(transfer_study(img, gt, s, orders, {}, target, fast_training()), ConfigError);
}

TEST_CASE("study CSV and markdown summary") {
  std::vector<StudyRow> rows;
  for (auto order : kAllReplayOrders) {
    rows.push_back({"a", order, "micro-A", 1, 90.0, 95.0});
    rows.push_back({"b", order, "micro-A", 1, 80.0, 91.0});
  }
  rows.push_back({"c", ReplayOrder::kReverse, "micro-A", 2, 50.0, 60.0});

  const auto path = std::filesystem::temp_directory_path() / "opl_test_study.csv";
  save_study_csv(rows, path);
  const auto loaded = load_study_csv(path);
  REQUIRE(loaded.size() == rows.size());
  CHECK(loaded[3].order == rows[3].order);
  CHECK(loaded[3].miou == doctest::Approx(rows[3].miou));

  const auto summary = summarize_study(rows);
  REQUIRE(summary.size() == 4);
  CHECK(summary[0].order == ReplayOrder::kCorrect);
  CHECK(summary[0].mean == doctest::Approx(85.0));
  CHECK(summary[0].variance == doctest::Approx(25.0));
  CHECK(summary[3].n == 3);
  CHECK(summary[3].mean == doctest::Approx(220.0 / 3.0));

  const std::string md = study_markdown(summary);
  CHECK(std::count(md.begin(), md.end(), '\n') == 6);
  CHECK(md.find("| correct | 85.00 ± 25.00 | 2 |") != std::string::npos);
}
