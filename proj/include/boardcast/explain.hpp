#pragma once

#include "boardcast/dataset.hpp"
#include "boardcast/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace boardcast {

/**
 * One attribution player: a single static slot, an entire temporal channel
 * across the window, or (sampling mode only) one day of one channel.
 * Players partition the explained sample's input scalars.
 */
struct Player {
  enum class Kind { static_slot, temporal_channel, temporal_cell };

  Kind kind = Kind::temporal_channel;
  std::string name;
  int static_index = -1;
  int channel = -1;
  int day = -1;
};

std::string to_string(Player::Kind kind);

/// Whole temporal channels plus one player per static slot. Slot names come
/// from the profile when given, "static[i]" otherwise.
std::vector<Player> default_players(const WindowSample& sample,
                                    const StaticProfile* profile = nullptr);

/// Per-(day, channel) temporal players plus static slots; only valid for
/// the sampling estimator.
std::vector<Player> per_day_players(const WindowSample& sample,
                                    const StaticProfile* profile = nullptr);

/// Any scoring function over a sample's tensors; the Shapley machinery is
/// agnostic to what produced it.
using ModelFn = std::function<Scalar(const Matrix& temporal, const Vector& statics)>;

ModelFn model_fn(const HybridModel& model);

struct Attribution {
  std::vector<Player> players;
  std::vector<Scalar> shapley;
  Scalar base_value = 0.0;        // mean model output over the background set
  Scalar explained_output = 0.0;  // model output on the explained sample
  Scalar efficiency_residual = 0.0;  // |gap| the sampling estimator redistributed
};

/**
 * Exact Shapley values under the interventional value function: v(S) is the
 * mean model output with players in S taken from the sample and the rest
 * from each background instance. Enumerates all 2^n coalitions; refuses
 * more than 15 players (use sampled_shapley instead).
 */
Attribution exact_shapley(const ModelFn& model, const WindowSample& sample,
                          const std::vector<WindowSample>& background,
                          const std::vector<Player>& players);

/**
 * Permutation-sampling estimator of the same values. Unbiased per player;
 * the efficiency gap is closed by redistributing the residual
 * proportionally to |phi| and its magnitude is reported, never hidden.
 */
Attribution sampled_shapley(const ModelFn& model, const WindowSample& sample,
                            const std::vector<WindowSample>& background,
                            const std::vector<Player>& players, int n_permutations,
                            std::uint64_t seed);

struct RankedPlayer {
  std::string name;
  std::string kind;
  Scalar mean_abs_shap = 0.0;
  int rank = 0;
};

/// Top-k players by mean |phi| over a set of attributions; ties break
/// lexicographically by player name. k beyond the player count is clamped.
std::vector<RankedPlayer> rank_features(const std::vector<Attribution>& attributions,
                                        int k);

}  // namespace boardcast
