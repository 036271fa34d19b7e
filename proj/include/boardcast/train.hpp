#pragma once

#include "boardcast/dataset.hpp"
#include "boardcast/metrics.hpp"
#include "boardcast/model.hpp"

#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace boardcast {

struct TrainConfig {
  int epochs_max = 200;
  int batch_size = 32;
  Scalar learning_rate = 1e-3;
  Scalar adam_beta1 = 0.9;
  Scalar adam_beta2 = 0.999;
  Scalar adam_epsilon = 1e-8;
  int early_stop_patience = 10;        // epochs without validation-AUC improvement
  Scalar split_fraction = 0.8;         // chronological train share
  std::uint64_t seed = 0;
  std::set<std::string> freeze;        // layer names whose updates are skipped
  Scalar imbalance_ratio_for_weighting = 3.0;

  void validate() const;
};

struct EpochStat {
  int epoch = 0;
  Scalar train_loss = 0.0;
  Scalar val_auc = std::numeric_limits<Scalar>::quiet_NaN();  // NaN = undefined
};

/// Everything needed to reproduce a run. `wall_seconds` is informational;
/// every other field is deterministic for a fixed (config, data, seed).
struct RunManifest {
  TrainConfig config;
  std::string dataset_fingerprint;
  int n_train = 0;
  int n_val = 0;
  Scalar pos_weight = 1.0;
  std::vector<EpochStat> curve;
  int epochs_run = 0;
  int best_epoch = -1;  // -1 when validation AUC was never defined
  Scalar best_val_auc = std::numeric_limits<Scalar>::quiet_NaN();
  ChannelNormalization normalization;
  bool transferred = false;
  double wall_seconds = 0.0;
};

std::string manifest_to_json(const RunManifest& manifest);

/**
 * Chronological split with a purge gap: validation is the tail share of
 * samples, and any training sample whose label window reaches into or past
 * the first validation anchor is dropped. Every validation anchor is
 * therefore strictly later than every training label date.
 */
std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split_chronological(
    std::vector<WindowSample> samples, Scalar fraction, int horizon);

/// Mean binary cross-entropy; probabilities are clamped to
/// [1e-12, 1 - 1e-12] before the logs.
Scalar bce_loss(const std::vector<Scalar>& probabilities, const std::vector<int>& labels);

/**
 * Adam + mean BCE with early stopping on validation AUC. Rare positives
 * (beyond the configured imbalance ratio) are up-weighted by N_neg/N_pos.
 * Layers named in config.freeze have gradients computed but updates
 * skipped. Parameters from the best-validation-AUC epoch are restored at
 * stop. Deterministic given (config, data, seed).
 */
RunManifest train(HybridModel& model, const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& val_set, const TrainConfig& config);

/// Scores every sample and evaluates AUC against the sample labels.
AucResult evaluate_auc(const HybridModel& model, const std::vector<WindowSample>& samples);

}  // namespace boardcast
