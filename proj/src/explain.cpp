#include "boardcast/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

namespace boardcast {

std::string to_string(Player::Kind kind) {
  switch (kind) {
    case Player::Kind::static_slot: return "static_slot";
    case Player::Kind::temporal_channel: return "temporal_channel";
    case Player::Kind::temporal_cell: return "temporal_cell";
  }
  return "?";
}

namespace {

std::string channel_name(int channel) {
  if (channel == 0) return "breach_fraction";
  if (channel == 1) return "case_count";
  return "channel_" + std::to_string(channel);
}

std::vector<Player> static_players(const WindowSample& sample,
                                   const StaticProfile* profile) {
  std::vector<Player> players;
  std::vector<std::string> names;
  if (profile) {
    names = profile->slot_names();
    if (static_cast<Eigen::Index>(names.size()) != sample.static_vec.size()) {
      throw ShapeError("static profile slot names do not match the sample's vector");
    }
  }
  for (Eigen::Index i = 0; i < sample.static_vec.size(); ++i) {
    Player p;
    p.kind = Player::Kind::static_slot;
    p.static_index = static_cast<int>(i);
    p.name = profile ? names[static_cast<std::size_t>(i)]
                     : "static[" + std::to_string(i) + "]";
    players.push_back(std::move(p));
  }
  return players;
}

}  // namespace

std::vector<Player> default_players(const WindowSample& sample,
                                    const StaticProfile* profile) {
  std::vector<Player> players;
  for (int c = 0; c < sample.temporal.cols(); ++c) {
    Player p;
    p.kind = Player::Kind::temporal_channel;
    p.channel = c;
    p.name = channel_name(c);
    players.push_back(std::move(p));
  }
  auto statics = static_players(sample, profile);
  players.insert(players.end(), statics.begin(), statics.end());
  return players;
}

std::vector<Player> per_day_players(const WindowSample& sample,
                                    const StaticProfile* profile) {
  std::vector<Player> players;
  for (int c = 0; c < sample.temporal.cols(); ++c) {
    for (int d = 0; d < sample.temporal.rows(); ++d) {
      Player p;
      p.kind = Player::Kind::temporal_cell;
      p.channel = c;
      p.day = d;
      p.name = channel_name(c) + "[day" + std::to_string(d) + "]";
      players.push_back(std::move(p));
    }
  }
  auto statics = static_players(sample, profile);
  players.insert(players.end(), statics.begin(), statics.end());
  return players;
}

ModelFn model_fn(const HybridModel& model) {
  return [&model](const Matrix& temporal, const Vector& statics) {
    return model.forward(temporal, statics);
  };
}

namespace {

struct MaskedInput {
  Matrix temporal;
  Vector statics;
};

void apply_player(MaskedInput& dst, const WindowSample& src, const Player& p) {
  switch (p.kind) {
    case Player::Kind::static_slot:
      dst.statics[p.static_index] = src.static_vec[p.static_index];
      break;
    case Player::Kind::temporal_channel:
      dst.temporal.col(p.channel) = src.temporal.col(p.channel);
      break;
    case Player::Kind::temporal_cell:
      dst.temporal(p.day, p.channel) = src.temporal(p.day, p.channel);
      break;
  }
}

void validate_inputs(const WindowSample& sample,
                     const std::vector<WindowSample>& background,
                     const std::vector<Player>& players) {
  if (background.empty()) throw DataError("shapley: background set is empty");
  if (players.empty()) throw DataError("shapley: no players given");
  for (const auto& b : background) {
    if (b.temporal.rows() != sample.temporal.rows() ||
        b.temporal.cols() != sample.temporal.cols() ||
        b.static_vec.size() != sample.static_vec.size()) {
      throw ShapeError("shapley: background sample shape differs from the explained sample");
    }
  }
  for (const auto& p : players) {
    if (p.kind == Player::Kind::static_slot &&
        (p.static_index < 0 || p.static_index >= sample.static_vec.size())) {
      throw ShapeError("shapley: player '" + p.name + "' indexes outside the static vector");
    }
    if (p.kind != Player::Kind::static_slot &&
        (p.channel < 0 || p.channel >= sample.temporal.cols())) {
      throw ShapeError("shapley: player '" + p.name + "' indexes a missing channel");
    }
    if (p.kind == Player::Kind::temporal_cell &&
        (p.day < 0 || p.day >= sample.temporal.rows())) {
      throw ShapeError("shapley: player '" + p.name + "' indexes a missing day");
    }
  }
}

}  // namespace

Attribution exact_shapley(const ModelFn& model, const WindowSample& sample,
                          const std::vector<WindowSample>& background,
                          const std::vector<Player>& players) {
  validate_inputs(sample, background, players);
  const int n = static_cast<int>(players.size());
  if (n > 15) {
    throw ConfigError("exact_shapley enumerates 2^n coalitions and refuses n = " +
                      std::to_string(n) + " > 15 players; use sampled_shapley");
  }

  const std::size_t n_masks = std::size_t{1} << n;
  std::vector<Scalar> value(n_masks, 0.0);
  MaskedInput masked;
  for (std::size_t mask = 0; mask < n_masks; ++mask) {
    Scalar total = 0.0;
    for (const auto& bg : background) {
      masked.temporal = bg.temporal;
      masked.statics = bg.static_vec;
      for (int i = 0; i < n; ++i) {
        if (mask & (std::size_t{1} << i)) {
          apply_player(masked, sample, players[static_cast<std::size_t>(i)]);
        }
      }
      total += model(masked.temporal, masked.statics);
    }
    value[mask] = total / static_cast<Scalar>(background.size());
  }

  // w[s] = s! (n-1-s)! / n!
  std::vector<Scalar> factorial(static_cast<std::size_t>(n) + 1, 1.0);
  for (std::size_t k = 1; k < factorial.size(); ++k) {
    factorial[k] = factorial[k - 1] * static_cast<Scalar>(k);
  }
  std::vector<Scalar> weight(static_cast<std::size_t>(n), 0.0);
  for (int s = 0; s < n; ++s) {
    weight[static_cast<std::size_t>(s)] =
        factorial[static_cast<std::size_t>(s)] *
        factorial[static_cast<std::size_t>(n - 1 - s)] /
        factorial[static_cast<std::size_t>(n)];
  }

  Attribution att;
  att.players = players;
  att.shapley.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    Scalar phi = 0.0;
    for (std::size_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      const int s = std::popcount(mask);
      phi += weight[static_cast<std::size_t>(s)] * (value[mask | bit] - value[mask]);
    }
    att.shapley[static_cast<std::size_t>(i)] = phi;
  }
  att.base_value = value[0];
  att.explained_output = value[n_masks - 1];
  att.efficiency_residual = 0.0;
  return att;
}

Attribution sampled_shapley(const ModelFn& model, const WindowSample& sample,
                            const std::vector<WindowSample>& background,
                            const std::vector<Player>& players, int n_permutations,
                            std::uint64_t seed) {
  validate_inputs(sample, background, players);
  if (n_permutations < 1) throw ConfigError("sampled_shapley needs n_permutations >= 1");
  const std::size_t n = players.size();

  // v(empty) and f(sample).
  Scalar base = 0.0;
  for (const auto& bg : background) base += model(bg.temporal, bg.static_vec);
  base /= static_cast<Scalar>(background.size());
  const Scalar full = model(sample.temporal, sample.static_vec);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Scalar> sums(n, 0.0);
  std::vector<MaskedInput> masked(background.size());

  for (int perm = 0; perm < n_permutations; ++perm) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < background.size(); ++b) {
      masked[b].temporal = background[b].temporal;
      masked[b].statics = background[b].static_vec;
    }
    Scalar prev = base;
    for (std::size_t k = 0; k < n; ++k) {
      const Player& p = players[order[k]];
      Scalar total = 0.0;
      for (auto& m : masked) {
        apply_player(m, sample, p);
        total += model(m.temporal, m.statics);
      }
      const Scalar cur = total / static_cast<Scalar>(background.size());
      sums[order[k]] += cur - prev;
      prev = cur;
    }
  }

  Attribution att;
  att.players = players;
  att.shapley.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    att.shapley[i] = sums[i] / static_cast<Scalar>(n_permutations);
  }
  att.base_value = base;
  att.explained_output = full;

  // Close the efficiency gap, reporting how much was redistributed.
  const Scalar target = full - base;
  const Scalar got = std::accumulate(att.shapley.begin(), att.shapley.end(), Scalar{0});
  const Scalar residual = target - got;
  att.efficiency_residual = std::abs(residual);
  Scalar abs_sum = 0.0;
  for (Scalar phi : att.shapley) abs_sum += std::abs(phi);
  if (abs_sum > 0.0) {
    for (auto& phi : att.shapley) phi += residual * std::abs(phi) / abs_sum;
  } else {
    for (auto& phi : att.shapley) phi += residual / static_cast<Scalar>(n);
  }
  return att;
}

std::vector<RankedPlayer> rank_features(const std::vector<Attribution>& attributions,
                                        int k) {
  if (attributions.empty()) throw DataError("rank_features: no attributions given");
  if (k < 1) throw ConfigError("rank_features: k must be >= 1");

  const auto& ref = attributions.front().players;
  for (const auto& att : attributions) {
    if (att.players.size() != ref.size()) {
      throw ShapeError("rank_features: attributions have differing player sets");
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (att.players[i].name != ref[i].name) {
        throw ShapeError("rank_features: attributions have differing player sets");
      }
    }
  }

  std::vector<RankedPlayer> ranked(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    Scalar total = 0.0;
    for (const auto& att : attributions) total += std::abs(att.shapley[i]);
    ranked[i].name = ref[i].name;
    ranked[i].kind = to_string(ref[i].kind);
    ranked[i].mean_abs_shap = total / static_cast<Scalar>(attributions.size());
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedPlayer& a, const RankedPlayer& b) {
    if (a.mean_abs_shap != b.mean_abs_shap) return a.mean_abs_shap > b.mean_abs_shap;
    return a.name < b.name;
  });
  if (static_cast<std::size_t>(k) < ranked.size()) {
    ranked.resize(static_cast<std::size_t>(k));
  }
  for (std::size_t i = 0; i < ranked.size(); ++i) ranked[i].rank = static_cast<int>(i) + 1;
  return ranked;
}

}  // namespace boardcast
