#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "opl/dataset.hpp"
#include "opl/error.hpp"
#include "opl/netpbm.hpp"
#include "opl/scene.hpp"
#include "support/oracles.hpp"

using namespace opl;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("opl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_bytes(const std::filesystem::path& path, const std::string& header, const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

TEST_CASE("load_image scales P5 and P6 payloads") {
  const auto dir = temp_dir("netpbm");
  write_bytes(dir / "g.pgm", "P5\n2 2\n255\n", {0, 255, 128, 64});
  const ImageTensor g = load_image(dir / "g.pgm");
  CHECK(g.height == 2);
  CHECK(g.width == 2);
  CHECK(g.channels == 3);
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(g.at(0, 0, ch) == 0.0f);
    CHECK(g.at(0, 1, ch) == 1.0f);
    CHECK(g.at(1, 0, ch) == doctest::Approx(128.0 / 255.0));
  }

  write_bytes(dir / "c.ppm", "P6\n2 1\n255\n", {255, 0, 0, 0, 0, 255});
  const ImageTensor c = load_image(dir / "c.ppm");
  CHECK(c.at(0, 0, 0) == 1.0f);
  CHECK(c.at(0, 0, 1) == 0.0f);
  CHECK(c.at(0, 0, 2) == 0.0f);
  CHECK(c.at(0, 1, 2) == 1.0f);
}

TEST_CASE("load_image rejects malformed files with a byte offset") {
  const auto dir = temp_dir("netpbm_bad");
  write_bytes(dir / "p7.pam", "P7\n2 2\n255\n", {0, 0, 0, 0});
  CHECK_THROWS_AS(load_image(dir / "p7.pam"), FormatError);

  write_bytes(dir / "short.ppm", "P6\n2 2\n255\n", {1, 2, 3});
  CHECK_THROWS_WITH_AS(load_image(dir / "short.ppm"), doctest::Contains("byte offset"), FormatError);

  write_bytes(dir / "deep.pgm", "P5\n1 1\n65535\n", {0, 0});
  CHECK_THROWS_WITH_AS(load_image(dir / "deep.pgm"), doctest::Contains("byte offset"), FormatError);

  CHECK_THROWS_AS(load_image(dir / "missing.ppm"), IoError);
}

TEST_CASE("image and label round trips are bit-exact") {
  const auto dir = temp_dir("roundtrip");
  RngStream rng(4);
  const ImageTensor img = oracle::random_image(5, 7, rng);
  save_image(img, dir / "x.ppm");
  CHECK(load_image(dir / "x.ppm") == img);

  LabelMap lbl = oracle::random_labels(8, 8, 4, rng);
  lbl.at(3, 3) = kIgnore;
  save_label(lbl, dir / "y.pgm");
  const LabelMap back = load_label(dir / "y.pgm");
  CHECK(back == lbl);
  CHECK(back.at(3, 3) == kIgnore);
}

TEST_CASE("labels outside the class range are rejected") {
  const auto dir = temp_dir("labels_bad");
  write_bytes(dir / "bad.pgm", "P5\n# classes=4\n2 1\n255\n", {1, 200});
  CHECK_THROWS_AS(load_label(dir / "bad.pgm"), ValidationError);
  write_bytes(dir / "nocls.pgm", "P5\n2 1\n255\n", {1, 2});
  CHECK_THROWS_AS(load_label(dir / "nocls.pgm"), FormatError);
  LabelMap lbl(1, 2, 4, 0);
  lbl.data[1] = 9;
  CHECK_THROWS_AS(lbl.validate(), ValidationError);
}

TEST_CASE("generate_scene is a pure function of seed and index") {
  SceneSpec spec;
  const auto a = generate_scene(spec, 3), b = generate_scene(spec, 3), c = generate_scene(spec, 4);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK_FALSE(a.first == c.first);
  a.first.validate();
  a.second.validate();
  for (auto v : a.second.data) CHECK(v < spec.num_classes);
}

TEST_CASE("a background-only spec renders class 0 everywhere") {
  SceneSpec spec;
  spec.min_shapes = 0;
  spec.max_shapes = 0;
  const auto [img, lbl] = generate_scene(spec, 1);
  CHECK(std::all_of(lbl.data.begin(), lbl.data.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("scene histogram regression fixture") {
  SceneSpec spec;
  spec.height = 64;
  spec.width = 64;
  spec.num_classes = 4;
  spec.seed = 7;
  const auto [img, lbl] = generate_scene(spec, 0);
  CHECK(class_histogram(lbl) == std::vector<std::size_t>{3634, 462, 0, 0});
}

TEST_CASE("scene spec validation") {
  SceneSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

namespace {

DatasetIndex synthetic_index(std::vector<std::vector<std::uint64_t>> histograms) {
  DatasetIndex index;
  index.num_classes = static_cast<int>(histograms.front().size());
  index.class_histogram.assign(histograms.front().size(), 0);
  for (std::size_t i = 0; i < histograms.size(); ++i) {
    index.entries.push_back({"img" + std::to_string(i), "lbl" + std::to_string(i), histograms[i]});
    for (std::size_t c = 0; c < histograms[i].size(); ++c) index.class_histogram[c] += histograms[i][c];
  }
  return index;
}

}  // namespace

TEST_CASE("class-preserving subset selection") {
  const DatasetIndex index = synthetic_index({{10, 0, 0, 0}, {0, 10, 0, 0}, {0, 0, 10, 0}, {0, 0, 0, 10}});

  SUBCASE("fraction 1 keeps every entry") {
    const DatasetIndex all = select_subset_class_preserving(index, 1.0, 3);
    std::set<std::string> names;
    for (const auto& e : all.entries) names.insert(e.image.string());
    CHECK(names.size() == 4);
  }
  SUBCASE("single-class images, half of them, cover two classes") {
    const DatasetIndex half = select_subset_class_preserving(index, 0.5, 3);
    REQUIRE(half.entries.size() == 2);
    int covered = 0;
    for (auto v : half.class_histogram) covered += v > 0 ? 1 : 0;
    CHECK(covered == 2);
  }
  SUBCASE("size is ceil(f * N)") {
    CHECK(select_subset_class_preserving(index, 0.3, 1).entries.size() == 2);
    CHECK(select_subset_class_preserving(index, 0.25, 1).entries.size() == 1);
  }
  SUBCASE("deterministic given the seed") {
    const auto a = select_subset_class_preserving(index, 0.5, 9);
    const auto b = select_subset_class_preserving(index, 0.5, 9);
    CHECK(a.entries.front().image == b.entries.front().image);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(select_subset_class_preserving(DatasetIndex{}, 0.5, 1), ValidationError);
    CHECK_THROWS_AS(select_subset_class_preserving(index, 0.0, 1), ValidationError);
  }
}

TEST_CASE("greedy subset beats the median random subset on a 50-scene set") {
  SceneSpec spec;
  std::vector<std::vector<std::uint64_t>> histograms;
  for (int i = 0; i < 50; ++i) {
    const auto h = class_histogram(generate_scene(spec, 200 + i).second);
    histograms.emplace_back(h.begin(), h.end());
  }
  const DatasetIndex index = synthetic_index(histograms);
  const DatasetIndex greedy = select_subset_class_preserving(index, 0.3, 5);
  REQUIRE(greedy.entries.size() == 15);
  const double greedy_gap = class_frequency_gap(greedy, index);

  RngStream rng(17);
  std::vector<double> gaps;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> order(50);
    for (std::size_t i = 0; i < 50; ++i) order[i] = i;
    for (std::size_t i = 50; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<std::vector<std::uint64_t>> picked;
    for (std::size_t i = 0; i < 15; ++i) picked.push_back(histograms[order[i]]);
    gaps.push_back(class_frequency_gap(synthetic_index(picked), index));
  }
  std::nth_element(gaps.begin(), gaps.begin() + 50, gaps.end());
  CHECK(greedy_gap <= gaps[50]);
}

TEST_CASE("dataset index CSV round trip and synthetic dataset emission") {
  const auto dir = temp_dir("dataset");
  SceneSpec spec;
  spec.height = 16;
  spec.width = 16;
  const DatasetIndex index = write_synthetic_dataset(spec, 0, 3, dir, "train_");
  CHECK(index.entries.size() == 3);
  CHECK(std::filesystem::exists(dir / "train_index.csv"));
  const DatasetIndex loaded = load_index(dir / "train_index.csv");
  REQUIRE(loaded.entries.size() == 3);
  CHECK(loaded.class_histogram == index.class_histogram);
  const LoadedDataset data = load_dataset(loaded);
  CHECK(data.labels[1] == generate_scene(spec, 1).second);

  std::ofstream(dir / "bad.csv") << "img,lab\nx,y\n";
  CHECK_THROWS_AS(load_index(dir / "bad.csv"), FormatError);
}
