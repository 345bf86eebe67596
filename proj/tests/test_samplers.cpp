#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "opl/error.hpp"
#include "opl/samplers.hpp"
#include "opl/scene.hpp"
#include "support/oracles.hpp"

using namespace opl;

namespace {

TrainConfig fast_training() {
  TrainConfig t;
  t.learning_rate = 5e-3;
  return t;
}

MetricsReport report_with(std::vector<std::optional<double>> iou) {
  MetricsReport r;
  r.iou = std::move(iou);
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    if (r.iou[c]) r.present_classes.push_back(static_cast<int>(c));
  }
  return r;
}

// 5x5, GT all class 0; prediction wrong on the centred 3x3 block.
std::pair<LabelMap, LabelMap> block_case() {
  LabelMap gt(5, 5, 2, 0), pred(5, 5, 2, 0);
  for (int r = 1; r <= 3; ++r) {
    for (int c = 1; c <= 3; ++c) pred.at(r, c) = 1;
  }
  return {pred, gt};
}

void check_baseline_contract(const SampleSet& s, const LabelMap& gt, std::size_t n) {
  CHECK(s.size() == n);
  CHECK_NOTHROW(s.validate(gt));
}

}  // namespace

TEST_CASE("lowest_iou_class") {
  CHECK(lowest_iou_class(report_with({100.0, 40.0, 70.0})) == 1);
  CHECK(lowest_iou_class(report_with({50.0, std::nullopt, 50.0})) == 0);
  CHECK(lowest_iou_class(report_with({std::nullopt, 12.0})) == 1);
  CHECK_THROWS_AS(lowest_iou_class(report_with({std::nullopt, std::nullopt})), ValidationError);
}

TEST_CASE("weight map of a misclassified 3x3 block") {
  const auto [pred, gt] = block_case();
  const WeightMap w = build_weight_map(pred, gt, Objective::kMiou);
  CHECK(w.support_size() == 9);

  // Brute-force distances, normalised.
  BoolMap region(5, 5);
  for (int r = 1; r <= 3; ++r) {
    for (int c = 1; c <= 3; ++c) region.set(r, c, true);
  }
  const auto brute = oracle::brute_edt(region);
  const double total = std::accumulate(brute.begin(), brute.end(), 0.0);
  for (std::size_t p = 0; p < 25; ++p) CHECK(w.data[p] == doctest::Approx(brute[p] / total));

  CHECK(w.data[12] == doctest::Approx(0.2));
  CHECK(w.data[6] == doctest::Approx(0.1));
  CHECK(w.data[18] == doctest::Approx(0.1));
  CHECK(w.data[0] == 0.0);

  const WeightMap acc = build_weight_map(pred, gt, Objective::kPixelAccuracy);
  CHECK(acc.support_size() == 1);
  CHECK(acc.data[12] == 1.0);
}

TEST_CASE("weight map when the whole image is misclassified") {
  const LabelMap gt(5, 5, 2, 1), pred(5, 5, 2, 0);
  const WeightMap w = build_weight_map(pred, gt, Objective::kMiou);
  const auto brute = oracle::brute_edt(BoolMap(5, 5, true));
  const double total = std::accumulate(brute.begin(), brute.end(), 0.0);
  CHECK(total == 35.0);
  CHECK(w.data[12] == doctest::Approx(3.0 / 35.0));
  CHECK(*std::max_element(w.data.begin(), w.data.end()) == w.data[12]);
  CHECK(std::accumulate(w.data.begin(), w.data.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("weight map restricts to the lowest-IoU class") {
  // Class 1 region is larger but class 2 has the lower IoU.
  LabelMap gt(6, 8, 3, 0), pred(6, 8, 3, 0);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) gt.at(r, c) = 1;
  }
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 4; ++c) pred.at(r, c) = 1;  // row 2 of class 1 predicted as 0
  }
  gt.at(5, 7) = gt.at(5, 6) = 2;
  pred.at(5, 6) = 2;  // class 2 half wrong
  const WeightMap w = build_weight_map(pred, gt, Objective::kMiou);
  CHECK(w.support_size() == 1);
  CHECK(w.data[5 * 8 + 7] == 1.0);

  const WeightMap open = build_weight_map(pred, gt, Objective::kMiou, false);
  for (int c = 0; c < 4; ++c) CHECK(open.data[2 * 8 + c] > 0.0);
  CHECK(open.data[5 * 8 + 7] == 0.0);

  CHECK_THROWS_AS(build_weight_map(gt, gt, Objective::kMiou), ValidationError);
}

TEST_CASE("weight map support avoids correct pixels on random pairs") {
  RngStream rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelMap gt = oracle::random_labels(12, 12, 3, rng);
    LabelMap pred = gt;
    for (auto& v : pred.data) {
      if (rng.uniform() < 0.3) v = static_cast<std::uint8_t>((v + 1) % 3);
    }
    for (auto objective : {Objective::kMiou, Objective::kPixelAccuracy}) {
      const WeightMap w = build_weight_map(pred, gt, objective);
      for (std::size_t p = 0; p < gt.pixels(); ++p) {
        if (pred.data[p] == gt.data[p]) CHECK(w.data[p] == 0.0);
      }
      CHECK(std::accumulate(w.data.begin(), w.data.end(), 0.0) == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("weighted_sample") {
  WeightMap one{2, 2, {0.0, 0.0, 1.0, 0.0}};
  RngStream rng(1);
  for (int i = 0; i < 10; ++i) CHECK(weighted_sample(one, 1, rng) == std::vector<std::size_t>{2});
  CHECK(weighted_sample(one, 3, rng) == std::vector<std::size_t>{2});

  WeightMap flat{2, 2, {0.25, 0.25, 0.25, 0.25}};
  auto all = weighted_sample(flat, 4, rng);
  std::ranges::sort(all);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});

  CHECK_THROWS_AS(weighted_sample(WeightMap{1, 2, {0.0, 0.0}}, 1, rng), ValidationError);

  RngStream a(9), b(9);
  CHECK(weighted_sample(flat, 2, a) == weighted_sample(flat, 2, b));
}

TEST_CASE("weighted_sample frequency follows the weights") {
  WeightMap w{1, 2, {0.75, 0.25}};
  RngStream rng(2024);
  int hits = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) hits += weighted_sample(w, 1, rng)[0] == 0 ? 1 : 0;
  const double freq = double(hits) / draws;
  CHECK(freq >= 0.74);
  CHECK(freq <= 0.76);
}

TEST_CASE("budget_pixels and config validation") {
  CHECK(budget_pixels(0.005, 4096) == 20);
  CHECK(budget_pixels(1e-6, 100) == 1);
  CHECK(budget_pixels(1.0, 77) == 77);
  CHECK_THROWS_AS(budget_pixels(0.0, 10), ConfigError);
  OracleConfig cfg;
  cfg.batch = 11;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.batch = 5;
  cfg.budget = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("sample set rounds, mask and validation") {
  SampleSet s{3, 3, 5, {}};
  for (int i = 0; i < 8; ++i) s.entries.push_back({i / 3, i % 3, 0});
  CHECK(s.rounds() == std::vector<std::size_t>{1, 5, 2});
  CHECK(s.mask().count() == 8);
  const LabelMap gt(3, 3, 2, 0);
  CHECK_NOTHROW(s.validate(gt));
  s.entries.push_back({0, 0, 0});
  CHECK_THROWS_AS(s.validate(gt), ValidationError);
  s.entries.back() = {2, 2, 1};
  CHECK_THROWS_AS(s.validate(gt), ValidationError);
}

TEST_CASE("constant scene stops after the seed pixel") {
  const ImageTensor img(16, 16, 3);
  const LabelMap gt(16, 16, 3, 2);
  OracleConfig cfg;
  cfg.budget = 20;
  const auto result = pixel_labeling(img, gt, init_model(ArchPreset::micro_a(3), 1), cfg, fast_training());
  CHECK(result.samples.size() == 1);
  CHECK(result.cause == StopCause::kThreshold);
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].reward == 100.0);
}

TEST_CASE("an unreachable threshold stops on the budget") {
  SceneSpec spec;
  spec.height = 24;
  spec.width = 24;
  const auto [img, gt] = generate_scene(spec, 1);
  OracleConfig cfg;
  cfg.budget = 10;
  cfg.threshold = 100.0 + 1e-9;
  cfg.batch = 5;
  const auto result = pixel_labeling(img, gt, init_model(ArchPreset::micro_a(4), 2), cfg, fast_training());
  CHECK(result.samples.size() >= 10);
  CHECK(result.samples.size() <= 14);
  CHECK(result.cause == StopCause::kBudget);
  CHECK_NOTHROW(result.samples.validate(gt));
  CHECK(result.history.back().samples == result.samples.size());
  CHECK(result.history.size() == result.samples.rounds().size());
}

TEST_CASE("pixel_labeling is deterministic") {
  SceneSpec spec;
  spec.height = 24;
  spec.width = 24;
  const auto [img, gt] = generate_scene(spec, 5);
  OracleConfig cfg;
  cfg.budget = 12;
  cfg.seed = 77;
  const auto model = init_model(ArchPreset::micro_a(4), 3);
  const auto a = pixel_labeling(img, gt, model, cfg, fast_training());
  const auto b = pixel_labeling(img, gt, model, cfg, fast_training());
  CHECK(a.samples == b.samples);
  CHECK(a.prediction == b.prediction);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].reward == b.history[i].reward);
  if (a.cause == StopCause::kThreshold) {
    CHECK(a.history.back().reward >= cfg.threshold);
  } else {
    CHECK(a.samples.size() >= cfg.budget);
  }
}

TEST_CASE("pixel_labeling matches or beats random sampling on paired seeds") {
  SceneSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.num_classes = 4;
  const auto [img, gt] = generate_scene(spec, 0);
  const std::size_t k = budget_pixels(0.005, img.pixels());
  double oracle_sum = 0.0, random_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto model = init_model(ArchPreset::micro_a(4), seed);
    OracleConfig cfg;
    cfg.budget = k;
    cfg.seed = seed;
    const auto labelled = pixel_labeling(img, gt, model, cfg, fast_training());
    oracle_sum += labelled.metrics.miou;

    RngStream rng(seed);
    const SampleSet random = sample_random(img, gt, labelled.samples.size(), rng);
    ModelState m = model;
    const LabelMap sparse = random.sparse_labels(4);
    const auto mask = random.pixel_indices();
    for (std::size_t round = 0; round < labelled.history.size(); ++round) train_inner(m, img, sparse, mask, fast_training());
    random_sum += metrics(confusion(predict(forward(m, img)), gt)).miou;
  }
  MESSAGE("oracle " << oracle_sum / 20 << " random " << random_sum / 20);
  CHECK(oracle_sum >= random_sum);
}

TEST_CASE("baseline samplers honour their contracts") {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  const auto [img, gt] = generate_scene(spec, 3);
  for (std::size_t n : {1u, 7u, 20u}) {
    RngStream rng(n);
    check_baseline_contract(sample_random(img, gt, n, rng), gt, n);
    check_baseline_contract(sample_uniform(img, gt, n, rng), gt, n);
    check_baseline_contract(sample_edge(img, gt, n, rng), gt, n);
    check_baseline_contract(sample_slic(img, gt, n, rng), gt, n);
    check_baseline_contract(sample_geodesic(img, gt, n, rng), gt, n);
  }
  RngStream rng(1);
  CHECK_THROWS_AS(sample_random(img, gt, 0, rng), ValidationError);
  CHECK_THROWS_AS(sample_random(img, gt, 32 * 32 + 1, rng), ValidationError);

  LabelMap partial(2, 2, 2, kIgnore);
  partial.at(0, 0) = 1;
  CHECK_THROWS_AS(sample_uniform(ImageTensor(2, 2, 3), partial, 2, rng), ValidationError);
  const SampleSet one = sample_random(ImageTensor(2, 2, 3), partial, 1, rng);
  CHECK(one.entries[0] == SampleEntry{0, 0, 1});
}

TEST_CASE("edge sampler falls back to random on a constant map") {
  const LabelMap gt(8, 8, 2, 1);
  const ImageTensor img(8, 8, 3);
  RngStream a(4), b(4);
  CHECK(sample_edge(img, gt, 5, a) == sample_random(img, gt, 5, b));
}

TEST_CASE("edge sampler only picks edge pixels when enough exist") {
  LabelMap gt(8, 8, 2, 0);
  for (int r = 0; r < 8; ++r) {
    for (int c = 4; c < 8; ++c) gt.at(r, c) = 1;
  }
  RngStream rng(6);
  const SampleSet s = sample_edge(ImageTensor(8, 8, 3), gt, 10, rng);
  for (const auto& e : s.entries) CHECK((e.col == 3 || e.col == 4));
}

TEST_CASE("uniform sampler puts one pixel in each tile") {
  const LabelMap gt(4, 4, 2, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed);
    const SampleSet s = sample_uniform(ImageTensor(4, 4, 3), gt, 4, rng);
    std::set<int> tiles;
    for (const auto& e : s.entries) tiles.insert((e.row / 2) * 2 + e.col / 2);
    CHECK(tiles.size() == 4);
  }
}

TEST_CASE("geodesic sampler jumps from a corner to the opposite corner") {
  ImageTensor img(4, 4, 3);
  std::fill(img.data.begin(), img.data.end(), 0.5f);
  const LabelMap gt(4, 4, 2, 0);
  int corner_starts = 0;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    RngStream rng(seed);
    const SampleSet s = sample_geodesic(img, gt, 2, rng);
    const auto& first = s.entries[0];
    if ((first.row != 0 && first.row != 3) || (first.col != 0 && first.col != 3)) continue;
    ++corner_starts;
    CHECK(s.entries[1].row == 3 - first.row);
    CHECK(s.entries[1].col == 3 - first.col);
  }
  CHECK(corner_starts > 0);
}

TEST_CASE("sample and history CSV files") {
  const auto dir = std::filesystem::temp_directory_path() / "opl_test_samplers";
  std::filesystem::create_directories(dir);
  SampleSet s{4, 5, 3, {{0, 1, 2}, {3, 4, 0}, {2, 2, 1}}};
  save_samples_csv(s, dir / "s.csv");
  std::ifstream in(dir / "s.csv");
  std::stringstream text;
  text << in.rdbuf();
  CHECK(text.str() == "t,row,col,class\n0,0,1,2\n1,3,4,0\n2,2,2,1\n");
  CHECK(load_samples_csv(dir / "s.csv", 4, 5, 3) == s);

  std::ofstream(dir / "gap.csv") << "t,row,col,class\n0,0,0,0\n2,1,1,0\n";
  CHECK_THROWS_AS(load_samples_csv(dir / "gap.csv", 4, 5, 3), FormatError);
  std::ofstream(dir / "oob.csv") << "t,row,col,class\n0,9,0,0\n";
  CHECK_THROWS_AS(load_samples_csv(dir / "oob.csv", 4, 5, 3), FormatError);
  CHECK_THROWS_AS(load_samples_csv(dir / "none.csv", 4, 5, 3), IoError);

  save_history_csv({{1, 50.0}, {6, 87.5}}, dir / "h.csv");
  std::ifstream hin(dir / "h.csv");
  std::string header;
  std::getline(hin, header);
  CHECK(header == "n_samples,reward");
}
