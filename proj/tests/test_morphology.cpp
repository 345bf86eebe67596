#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "opl/error.hpp"
#include "opl/morphology.hpp"
#include "support/oracles.hpp"

using namespace opl;

namespace {

BoolMap from_rows(const std::vector<std::string>& rows) {
  BoolMap m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) m.set(r, c, rows[r][c] == '#');
  }
  return m;
}

ImageTensor flat_image(int h, int w, float value) {
  ImageTensor img(h, w, 3);
  std::fill(img.data.begin(), img.data.end(), value);
  return img;
}

bool segment_connected(const std::vector<int>& seg, int h, int w, int id) {
  BoolMap m(h, w);
  for (std::size_t p = 0; p < seg.size(); ++p) m.data[p] = seg[p] == id;
  const auto ids = oracle::flood_fill(m, 4);
  return *std::max_element(ids.begin(), ids.end()) == 1;
}

}  // namespace

TEST_CASE("two blobs give two components with their sizes") {
  const BoolMap m = from_rows({
      "##...",
      "###..",
      ".....",
      "...##",
      "....#",
  });
  const ComponentLabeling cc = connected_components(m);
  REQUIRE(cc.count() == 2);
  CHECK(cc.sizes == std::vector<std::size_t>{5, 3});
  CHECK(cc.largest() == 1);
  CHECK(cc.labels[0] == 1);
  CHECK(cc.labels[24] == 2);
}

TEST_CASE("diagonal neighbours depend on connectivity") {
  const BoolMap m = from_rows({"#.", ".#"});
  CHECK(connected_components(m, 8).count() == 1);
  CHECK(connected_components(m, 4).count() == 2);
  CHECK(connected_components(BoolMap(3, 3), 8).largest() == 0);
}

TEST_CASE("components match flood fill on random masks") {
  RngStream rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const BoolMap m = oracle::random_mask(32, 32, 0.45, rng);
    for (int conn : {4, 8}) {
      const ComponentLabeling cc = connected_components(m, conn);
      CHECK(cc.labels == oracle::flood_fill(m, conn));
      const auto fg = static_cast<std::size_t>(std::count(m.data.begin(), m.data.end(), 1));
      CHECK(std::accumulate(cc.sizes.begin(), cc.sizes.end(), std::size_t{0}) == fg);
    }
    // Each 4-component lies inside one 8-component.
    const auto c4 = connected_components(m, 4), c8 = connected_components(m, 8);
    std::map<int, int> parent;
    bool refines = true;
    for (std::size_t p = 0; p < m.pixels(); ++p) {
      if (!c4.labels[p]) continue;
      auto [it, inserted] = parent.emplace(c4.labels[p], c8.labels[p]);
      if (!inserted && it->second != c8.labels[p]) refines = false;
    }
    CHECK(refines);
  }
}

TEST_CASE("distance transform of a centred 3x3 block") {
  const BoolMap m = from_rows({
      ".....",
      ".###.",
      ".###.",
      ".###.",
      ".....",
  });
  const DistanceField d = euclidean_dt(m);
  const auto brute = oracle::brute_edt(m);
  CHECK(d.data == brute);
  CHECK(d.at(2, 2) == 2.0);
  CHECK(d.at(1, 1) == 1.0);
  CHECK(d.at(3, 2) == 1.0);
  CHECK(d.at(0, 0) == 0.0);
}

TEST_CASE("distance transform edge cases") {
  const DistanceField empty = euclidean_dt(BoolMap(4, 6));
  CHECK(std::ranges::all_of(empty.data, [](double v) { return v == 0.0; }));

  const DistanceField whole = euclidean_dt(BoolMap(5, 5, true));
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) CHECK(whole.at(r, c) == double(std::min({r + 1, c + 1, 5 - r, 5 - c})));
  }
}

TEST_CASE("distance transform matches brute force on random regions") {
  RngStream rng(55);
  for (double density : {0.3, 0.7, 0.95}) {
    for (int trial = 0; trial < 4; ++trial) {
      const BoolMap m = oracle::random_mask(32, 32, density, rng);
      const DistanceField d = euclidean_dt(m);
      const auto brute = oracle::brute_edt(m);
      for (std::size_t p = 0; p < m.pixels(); ++p) {
        CHECK(d.data[p] == doctest::Approx(brute[p]).epsilon(1e-12));
        CHECK((d.data[p] > 0.0) == (m.data[p] != 0));
      }
    }
  }
}

TEST_CASE("label edges") {
  CHECK(std::ranges::none_of(label_edges(LabelMap(4, 4, 3, 1)).data, [](auto v) { return v != 0; }));

  LabelMap split(3, 4, 2, 0);
  for (int r = 0; r < 3; ++r) split.at(r, 2) = split.at(r, 3) = 1;
  const BoolMap e = label_edges(split);
  for (int r = 0; r < 3; ++r) {
    CHECK(e.at(r, 0) == 0);
    CHECK(e.at(r, 1) == 1);
    CHECK(e.at(r, 2) == 1);
    CHECK(e.at(r, 3) == 0);
  }

  LabelMap checker(5, 5, 2);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) checker.at(r, c) = static_cast<std::uint8_t>((r + c) % 2);
  }
  CHECK(std::ranges::all_of(label_edges(checker).data, [](auto v) { return v != 0; }));

  LabelMap ignore(1, 3, 2, 0);
  ignore.at(0, 2) = kIgnore;
  CHECK(label_edges(ignore).data == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("slic with one segment covers the image") {
  RngStream rng(3);
  const auto seg = slic(oracle::random_image(12, 10, rng), 1);
  CHECK(std::ranges::all_of(seg, [](int v) { return v == 0; }));
}

TEST_CASE("slic recovers four flat quadrants") {
  ImageTensor img(32, 32, 3);
  const float colours[4][3] = {{0.9f, 0.1f, 0.1f}, {0.1f, 0.8f, 0.2f}, {0.1f, 0.2f, 0.9f}, {0.9f, 0.9f, 0.2f}};
  std::vector<int> quadrant(img.pixels());
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const int q = (r >= 16 ? 2 : 0) + (c >= 16 ? 1 : 0);
      quadrant[static_cast<std::size_t>(r) * 32 + c] = q;
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = colours[q][ch];
    }
  }
  const auto seg = slic(img, 4);
  // Same partition: segment ids map one-to-one onto quadrants.
  std::map<int, std::set<int>> seg_to_q, q_to_seg;
  for (std::size_t p = 0; p < seg.size(); ++p) {
    seg_to_q[seg[p]].insert(quadrant[p]);
    q_to_seg[quadrant[p]].insert(seg[p]);
  }
  CHECK(seg_to_q.size() == 4);
  for (const auto& [id, qs] : seg_to_q) CHECK(qs.size() == 1);
  for (const auto& [q, ids] : q_to_seg) CHECK(ids.size() == 1);
}

TEST_CASE("slic segments are contiguous, connected and bounded in number") {
  RngStream rng(77);
  for (int k : {3, 9, 25}) {
    const ImageTensor img = oracle::random_image(24, 28, rng);
    const auto seg = slic(img, k);
    const int n = *std::max_element(seg.begin(), seg.end()) + 1;
    CHECK(n >= 1);
    CHECK(n <= 2 * k);
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    for (int s : seg) ++count[static_cast<std::size_t>(s)];
    CHECK(std::ranges::all_of(count, [](int v) { return v > 0; }));
    for (int id = 0; id < n; ++id) CHECK(segment_connected(seg, 24, 28, id));
  }
}

TEST_CASE("slic argument errors") {
  const ImageTensor img = flat_image(4, 4, 0.5f);
  CHECK_THROWS_AS(slic(img, 0), ValidationError);
  CHECK_THROWS_AS(slic(img, 17), ValidationError);
  CHECK_THROWS_AS(slic(img, 2, 10.0, 10, -1.0), ValidationError);
}

TEST_CASE("geodesic distance on a flat image is the grid path length") {
  const ImageTensor img = flat_image(1, 11, 0.4f);
  const DistanceField d = geodesic_field(img, {0});
  CHECK(d.at(0, 10) == doctest::Approx(10.0));

  const ImageTensor sq = flat_image(5, 5, 0.7f);
  const DistanceField diag = geodesic_field(sq, {0});
  CHECK(diag.at(4, 4) == doctest::Approx(4.0 * std::sqrt(2.0)));
  CHECK(diag.at(4, 2) == doctest::Approx(2.0 + 2.0 * std::sqrt(2.0)));
}

TEST_CASE("geodesic distance with every pixel a source is zero") {
  RngStream rng(2);
  const ImageTensor img = oracle::random_image(6, 6, rng);
  std::vector<std::size_t> all(img.pixels());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const DistanceField d = geodesic_field(img, all);
  CHECK(std::ranges::all_of(d.data, [](double v) { return v == 0.0; }));
  CHECK_THROWS_AS(geodesic_field(img, {}), ValidationError);
}

TEST_CASE("geodesic distance matches Bellman-Ford") {
  RngStream rng(40);
  for (int trial = 0; trial < 5; ++trial) {
    const ImageTensor img = oracle::random_image(16, 16, rng);
    const std::vector<std::size_t> sources{rng.below(256), rng.below(256)};
    const DistanceField d = geodesic_field(img, sources, 50.0);
    const auto ref = oracle::bellman_ford(img, sources, 50.0);
    for (std::size_t p = 0; p < img.pixels(); ++p) CHECK(d.data[p] == doctest::Approx(ref[p]).epsilon(1e-9));
    for (auto s : sources) CHECK(d.data[s] == 0.0);
  }
}

TEST_CASE("geodesic distance obeys the triangle inequality") {
  RngStream rng(41);
  const ImageTensor img = oracle::random_image(16, 16, rng);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t s = rng.below(256), w = rng.below(256), x = rng.below(256);
    const DistanceField from_s = geodesic_field(img, {s});
    const DistanceField from_w = geodesic_field(img, {w});
    CHECK(from_s.data[x] <= from_s.data[w] + from_w.data[x] + 1e-9);
  }
}
