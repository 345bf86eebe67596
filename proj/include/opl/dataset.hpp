#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "opl/image.hpp"
#include "opl/scene.hpp"

namespace opl {

struct DatasetEntry {
  std::filesystem::path image;
  std::filesystem::path label;
  std::vector<std::uint64_t> histogram;  // per-class pixel counts of the label map
};

/// A list of (image, label) files plus the pooled class histogram.
struct DatasetIndex {
  int num_classes = 0;
  std::vector<DatasetEntry> entries;
  std::vector<std::uint64_t> class_histogram;

  std::size_t size() const { return entries.size(); }
};

/// Loads every label (and image header) to fill histograms and to check that
/// each image/label pair agrees in size.
DatasetIndex build_index(const std::vector<std::pair<std::filesystem::path, std::filesystem::path>>& files);

/// CSV with header `image,label`; relative paths resolve against the CSV's directory.
DatasetIndex load_index(const std::filesystem::path& csv);
void save_index(const DatasetIndex& index, const std::filesystem::path& csv);

/// Greedy class-distribution matching: repeatedly adds the image that brings
/// the subset's class-frequency vector closest (L1) to the full set's.
/// Returns exactly ceil(fraction * N) entries; `seed` breaks ties.
DatasetIndex select_subset_class_preserving(const DatasetIndex& index, double fraction, std::uint64_t seed);

/// L1 distance between the class-frequency vectors of `subset` and `full`.
double class_frequency_gap(const DatasetIndex& subset, const DatasetIndex& full);

/// Renders scenes first_index .. first_index+count-1 to `dir` as
/// <prefix>NNNN.ppm / <prefix>NNNN.pgm and writes `dir/<prefix>index.csv`.
DatasetIndex write_synthetic_dataset(const SceneSpec& spec, std::uint64_t first_index, std::size_t count,
                                     const std::filesystem::path& dir, const std::string& prefix);

/// Image/label pairs held in memory.
struct LoadedDataset {
  std::vector<ImageTensor> images;
  std::vector<LabelMap> labels;
  std::size_t size() const { return images.size(); }
};

LoadedDataset load_dataset(const DatasetIndex& index);

}  // namespace opl
