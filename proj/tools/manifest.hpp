#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace opl::cli {

/// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
std::string git_blob_hash(const std::filesystem::path& file);

/// Prints `stage=<name> pct=<int>` lines on stdout and records per-stage
/// wall-clock time from the first to the last report of each stage.
class Progress {
 public:
  void operator()(const std::string& stage, int pct);
  const std::vector<std::pair<std::string, double>>& seconds() const { return seconds_; }

 private:
  using Clock = std::chrono::steady_clock;
  std::map<std::string, Clock::time_point> start_;
  std::map<std::string, int> last_pct_;
  std::vector<std::pair<std::string, double>> seconds_;
};

struct Manifest {
  std::string command;
  std::string config;  // TOML snapshot of the resolved options
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::filesystem::path> inputs;
  int threads = 1;

  /// Writes `dir/manifest.toml`; timings come from `progress` when given.
  void write(const std::filesystem::path& dir, const Progress* progress = nullptr) const;
};

}  // namespace opl::cli
