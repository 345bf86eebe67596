#include "opl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "opl/error.hpp"
#include "opl/netpbm.hpp"
#include "opl/rng.hpp"

namespace opl {
namespace {

std::vector<double> frequencies(const std::vector<std::uint64_t>& counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  std::vector<double> f(counts.size(), 0.0);
  if (total > 0) {
    for (std::size_t c = 0; c < counts.size(); ++c) f[c] = static_cast<double>(counts[c]) / total;
  }
  return f;
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

// Reads just the P5/P6 width and height.
std::pair<int, int> image_size(const std::filesystem::path& path) {
  ImageTensor img = load_image(path);
  return {img.height, img.width};
}

}  // namespace

DatasetIndex build_index(const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>& files) {
  DatasetIndex index;
  for (const auto& [image, label] : files) {
    LabelMap lbl = load_label(label);
    auto [h, w] = image_size(image);
    if (h != lbl.height || w != lbl.width) {
      throw ShapeError("dataset: " + image.string() + " is " + std::to_string(h) + "x" + std::to_string(w) +
                       " but " + label.string() + " is " + std::to_string(lbl.height) + "x" +
                       std::to_string(lbl.width));
    }
    if (index.entries.empty()) {
      index.num_classes = lbl.num_classes;
      index.class_histogram.assign(static_cast<std::size_t>(lbl.num_classes), 0);
    } else if (lbl.num_classes != index.num_classes) {
      throw ValidationError("dataset: " + label.string() + " declares " + std::to_string(lbl.num_classes) +
                            " classes, expected " + std::to_string(index.num_classes));
    }
    DatasetEntry entry{image, label, {}};
    for (auto v : class_histogram(lbl)) entry.histogram.push_back(v);
    for (std::size_t c = 0; c < entry.histogram.size(); ++c) index.class_histogram[c] += entry.histogram[c];
    index.entries.push_back(std::move(entry));
  }
  return index;
}

DatasetIndex load_index(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "image,label") {
    throw FormatError(csv.string() + ": expected header 'image,label'");
  }
  const auto base = csv.parent_path();
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> files;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw FormatError(csv.string() + ": line " + std::to_string(lineno) + " must have two fields");
    }
    std::filesystem::path image = trim(line.substr(0, comma));
    std::filesystem::path label = trim(line.substr(comma + 1));
    if (image.is_relative()) image = base / image;
    if (label.is_relative()) label = base / label;
    files.emplace_back(image, label);
  }
  return build_index(files);
}

void save_index(const DatasetIndex& index, const std::filesystem::path& csv) {
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw IoError("cannot write " + csv.string());
  const auto base = csv.parent_path();
  out << "image,label\n";
  for (const auto& e : index.entries) {
    out << std::filesystem::proximate(e.image, base).generic_string() << ','
        << std::filesystem::proximate(e.label, base).generic_string() << '\n';
  }
  if (!out) throw IoError("write failed for " + csv.string());
}

DatasetIndex select_subset_class_preserving(const DatasetIndex& index, double fraction, std::uint64_t seed) {
  if (index.entries.empty()) throw ValidationError("subset selection: empty dataset index");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("subset selection: fraction must lie in (0,1]");
  }
  const std::size_t n = index.entries.size();
  // Guard against 0.3 * 10 evaluating to 3.0000000000000004.
  const auto want = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (want < 1) throw ValidationError("subset selection: fraction selects no image");

  const auto target = frequencies(index.class_histogram);
  RngStream rng(seed);
  std::vector<std::uint64_t> tie_key(n);
  for (auto& k : tie_key) k = rng.next_u64();

  std::vector<bool> taken(n, false);
  std::vector<std::uint64_t> running(static_cast<std::size_t>(index.num_classes), 0);
  DatasetIndex subset;
  subset.num_classes = index.num_classes;
  subset.class_histogram.assign(running.size(), 0);
  for (std::size_t round = 0; round < want; ++round) {
    std::size_t best = n;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      std::vector<std::uint64_t> candidate = running;
      for (std::size_t c = 0; c < candidate.size(); ++c) candidate[c] += index.entries[i].histogram[c];
      const double gap = l1(frequencies(candidate), target);
      if (best == n || gap < best_gap || (gap == best_gap && tie_key[i] < tie_key[best])) {
        best = i;
        best_gap = gap;
      }
    }
    taken[best] = true;
    for (std::size_t c = 0; c < running.size(); ++c) running[c] += index.entries[best].histogram[c];
    subset.entries.push_back(index.entries[best]);
  }
  subset.class_histogram = running;
  return subset;
}

double class_frequency_gap(const DatasetIndex& subset, const DatasetIndex& full) {
  return l1(frequencies(subset.class_histogram), frequencies(full.class_histogram));
}

DatasetIndex write_synthetic_dataset(const SceneSpec& spec, std::uint64_t first_index, std::size_t count,
                                     const std::filesystem::path& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> files;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t idx = first_index + i;
    auto [img, lbl] = generate_scene(spec, idx);
    char stem[64];
    std::snprintf(stem, sizeof stem, "%s%04llu", prefix.c_str(), static_cast<unsigned long long>(idx));
    const auto image_path = dir / (std::string(stem) + ".ppm");
    const auto label_path = dir / (std::string(stem) + ".pgm");
    save_image(img, image_path);
    save_label(lbl, label_path);
    files.emplace_back(image_path, label_path);
  }
  DatasetIndex index = build_index(files);
  save_index(index, dir / (prefix + "index.csv"));
  return index;
}

LoadedDataset load_dataset(const DatasetIndex& index) {
  LoadedDataset data;
  for (const auto& e : index.entries) {
    data.images.push_back(load_image(e.image));
    data.labels.push_back(load_label(e.label));
  }
  return data;
}

}  // namespace opl
