#pragma once

#include "boardcast/model.hpp"
#include "boardcast/train.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace boardcast {

/// Which source layers land where in the target model, which of them stay
/// frozen during fine-tuning, and which target layers are re-drawn fresh.
struct TransferPlan {
  std::string source_checkpoint;  // informational; transplant works in memory
  std::vector<std::pair<std::string, std::string>> layer_map;  // source -> target
  std::set<std::string> freeze;          // subset of mapped target layers
  std::set<std::string> reinitialized;   // disjoint from mapped target layers
};

/// The default experiment: carry over both feature branches, re-draw the
/// two head layers, freeze nothing.
TransferPlan default_plan(const HybridModel& source);

/**
 * Copies mapped layer parameters from source into target bit-exactly,
 * re-draws reinitialized layers from `reinit_seed`, and leaves everything
 * else untouched. Shapes of mapped layers must match exactly.
 */
void transplant(HybridModel& target, const HybridModel& source,
                const TransferPlan& plan, std::uint64_t reinit_seed);

/// train() with the plan's freeze set applied and the manifest flagged as a
/// transferred run.
RunManifest fine_tune(HybridModel& transplanted,
                      const std::vector<WindowSample>& train_set,
                      const std::vector<WindowSample>& val_set, TrainConfig config,
                      const TransferPlan& plan);

struct TransferCell {
  std::string source;
  std::string target;
  bool available = false;
  std::string note;  // why unavailable, when it is
  std::optional<Scalar> transferred_auc;
  std::optional<Scalar> indigenous_auc;
  int n_val = 0;
  std::uint64_t seed = 0;
};

struct TransferReport {
  int budget_days = -1;  // -1 = all target training data
  std::vector<TransferCell> cells;
};

/// Keeps only training samples anchored within the final `budget_days`
/// days of the split's span; non-positive budget keeps everything.
std::vector<WindowSample> limit_to_budget(std::vector<WindowSample> train,
                                          int budget_days);

/**
 * The paper's cross-phase experiment. For every ordered (source, target)
 * pair: train the source model on its full period, transplant its branches
 * into a fresh target model, fine-tune on the target's (budget-limited)
 * training split, and report transferred vs indigenous validation AUC.
 * Both runs share the target's split and seed. Diagonal cells are
 * self-transfers and report the indigenous result on both sides. Periods
 * whose samples cannot sustain a split are marked unavailable; fewer than
 * two usable periods is an error.
 */
TransferReport cross_period_matrix(
    const std::map<std::string, std::vector<WindowSample>>& period_samples,
    ModelVariant variant, const std::vector<int>& static_level_widths,
    const Hyperparams& hp, const TrainConfig& config, int horizon, int budget_days);

void write_transfer_report(const std::vector<TransferReport>& reports,
                           const std::filesystem::path& path);

}  // namespace boardcast
