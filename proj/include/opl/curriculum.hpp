#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "opl/micronet.hpp"
#include "opl/samplers.hpp"
#include "opl/segmetrics.hpp"

namespace opl {

enum class ReplayOrder { kCorrect, kNoOrder, kRandomOrder, kReverse };

std::string to_string(ReplayOrder order);
ReplayOrder parse_replay_order(const std::string& name);
inline constexpr ReplayOrder kAllReplayOrders[] = {ReplayOrder::kCorrect, ReplayOrder::kNoOrder,
                                                   ReplayOrder::kRandomOrder, ReplayOrder::kReverse};

struct ReplayMode {
  ReplayOrder order = ReplayOrder::kCorrect;
  int no_order_iters = 200;
  std::uint64_t permutation_seed = 0;  // random_order only

  void validate() const;
};

/// Inner-iteration count that gives no_order the same number of optimizer
/// steps as the batched schedule of `samples`.
int equal_budget_iters(const SampleSet& samples, const TrainConfig& tcfg);

struct ReplayResult {
  LabelMap prediction;
  MetricsReport metrics;
};

/// Trains a fresh init_model(preset, seed) on the revealed pixels only.
/// Ordered modes grow the mask round by round (rounds as acquired, applied to
/// the permuted entry list) with tcfg.inner_iters steps after each growth;
/// no_order trains on the full mask for no_order_iters steps.
ReplayResult replay(const ImageTensor& img, const LabelMap& gt, const SampleSet& samples,
                    const ReplayMode& mode, const ArchPreset& preset, std::uint64_t seed,
                    const TrainConfig& tcfg);

/// Trains `model` on `samples` with the acquisition schedule. Replay and the
/// baseline samplers both go through here.
void train_on_schedule(ModelState& model, const ImageTensor& img, const SampleSet& samples,
                       const TrainConfig& tcfg);

struct StudyRow {
  std::string scene;
  ReplayOrder order = ReplayOrder::kCorrect;
  std::string preset;
  std::uint64_t seed = 0;
  double miou = 0.0;
  double pixel_accuracy = 0.0;
};

/// Replays `samples` (recorded with another architecture) on `target` for
/// every listed order and seed.
std::vector<StudyRow> transfer_study(const ImageTensor& img, const LabelMap& gt, const SampleSet& samples,
                                     const std::vector<ReplayOrder>& orders,
                                     const std::vector<std::uint64_t>& seeds, const ArchPreset& target,
                                     const TrainConfig& tcfg, int no_order_iters = 200,
                                     const std::string& scene = "scene");

/// `scene,mode,preset,seed,miou,pixel_acc`
void save_study_csv(const std::vector<StudyRow>& rows, const std::filesystem::path& path);
std::vector<StudyRow> load_study_csv(const std::filesystem::path& path);

struct ModeSummary {
  ReplayOrder order = ReplayOrder::kCorrect;
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

/// Mean and (population) variance of mIoU per mode, in kAllReplayOrders order.
std::vector<ModeSummary> summarize_study(const std::vector<StudyRow>& rows);
std::string study_markdown(const std::vector<ModeSummary>& summary);

}  // namespace opl
