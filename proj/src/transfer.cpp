#include "boardcast/transfer.hpp"

#include "boardcast/csv.hpp"

#include <algorithm>
#include <sstream>

namespace boardcast {

namespace {

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream oss;
  oss << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << ", ";
    oss << shape[i];
  }
  oss << "]";
  return oss.str();
}

std::map<std::string, std::vector<TensorRef>> refs_by_layer(ParamSet& params) {
  std::map<std::string, std::vector<TensorRef>> by_layer;
  for (auto& ref : tensor_refs(params)) {
    by_layer[ref.layer].push_back(ref);
  }
  return by_layer;
}

}  // namespace

TransferPlan default_plan(const HybridModel& source) {
  TransferPlan plan;
  for (const auto& name : source.layer_names()) {
    if (name.rfind("head.", 0) == 0) {
      plan.reinitialized.insert(name);
    } else {
      plan.layer_map.emplace_back(name, name);
    }
  }
  return plan;
}

void transplant(HybridModel& target, const HybridModel& source,
                const TransferPlan& plan, std::uint64_t reinit_seed) {
  auto source_layers = refs_by_layer(const_cast<ParamSet&>(source.params()));
  auto target_layers = refs_by_layer(target.params());

  std::set<std::string> mapped_targets;
  for (const auto& [src_name, tgt_name] : plan.layer_map) {
    mapped_targets.insert(tgt_name);
  }
  for (const auto& name : plan.freeze) {
    if (!mapped_targets.count(name)) {
      throw ConfigError("transfer plan freezes unmapped layer '" + name + "'");
    }
  }
  for (const auto& name : plan.reinitialized) {
    if (mapped_targets.count(name)) {
      throw ConfigError("transfer plan both maps and reinitializes layer '" + name + "'");
    }
    if (!target_layers.count(name)) {
      throw ConfigError("transfer plan reinitializes unknown layer '" + name + "'");
    }
  }

  for (const auto& [src_name, tgt_name] : plan.layer_map) {
    auto src_it = source_layers.find(src_name);
    if (src_it == source_layers.end()) {
      throw ConfigError("source model has no layer '" + src_name + "'");
    }
    auto tgt_it = target_layers.find(tgt_name);
    if (tgt_it == target_layers.end()) {
      throw ConfigError("target model has no layer '" + tgt_name + "'");
    }
    const auto& src_refs = src_it->second;
    auto& tgt_refs = tgt_it->second;
    if (src_refs.size() != tgt_refs.size()) {
      throw ShapeError("layer '" + src_name + "' has a different tensor set in the target");
    }
    for (std::size_t i = 0; i < src_refs.size(); ++i) {
      if (src_refs[i].shape != tgt_refs[i].shape) {
        throw ShapeError("transplant shape mismatch on layer '" + src_name + "' tensor '" +
                         src_refs[i].tensor + "': source " +
                         shape_to_string(src_refs[i].shape) + " vs target " +
                         shape_to_string(tgt_refs[i].shape));
      }
    }
    for (std::size_t i = 0; i < src_refs.size(); ++i) {
      std::copy(src_refs[i].data, src_refs[i].data + src_refs[i].size, tgt_refs[i].data);
    }
  }

  for (const auto& name : plan.reinitialized) {
    target.reinit_layer(name, reinit_seed);
  }
  target.manifest().transferred = true;
}

RunManifest fine_tune(HybridModel& transplanted,
                      const std::vector<WindowSample>& train_set,
                      const std::vector<WindowSample>& val_set, TrainConfig config,
                      const TransferPlan& plan) {
  config.freeze.insert(plan.freeze.begin(), plan.freeze.end());
  RunManifest manifest = train(transplanted, train_set, val_set, config);
  manifest.transferred = true;
  transplanted.manifest().transferred = true;
  return manifest;
}

std::vector<WindowSample> limit_to_budget(std::vector<WindowSample> train,
                                          int budget_days) {
  if (budget_days <= 0 || train.empty()) return train;
  Date last = train.front().anchor_date;
  for (const auto& s : train) last = std::max(last, s.anchor_date);
  const Date cutoff = last - (budget_days - 1);
  std::vector<WindowSample> kept;
  for (auto& s : train) {
    if (s.anchor_date >= cutoff) kept.push_back(std::move(s));
  }
  return kept;
}

TransferReport cross_period_matrix(
    const std::map<std::string, std::vector<WindowSample>>& period_samples,
    ModelVariant variant, const std::vector<int>& static_level_widths,
    const Hyperparams& hp, const TrainConfig& config, int horizon, int budget_days) {
  struct PeriodData {
    std::vector<WindowSample> train_full;   // source-side training data
    std::vector<WindowSample> train_budget; // target-side, budget-limited
    std::vector<WindowSample> val;
    ChannelNormalization norm;
    std::uint64_t seed = 0;
    std::string failure;
  };

  std::map<std::string, PeriodData> prepared;
  int usable = 0;
  for (const auto& [name, samples] : period_samples) {
    PeriodData data;
    data.seed = derive_seed(config.seed, "period/" + name);
    try {
      auto [train_split, val_split] =
          split_chronological(samples, config.split_fraction, horizon);
      data.val = val_split;
      data.train_full = train_split;
      data.train_budget = limit_to_budget(train_split, budget_days);
      if (data.train_budget.empty()) {
        throw DataError("budget limit leaves no training samples");
      }
      // Case-channel statistics come from the data each side actually
      // trains on; target-side validation shares the target's statistics.
      std::vector<WindowSample> val_copy = data.val;
      data.norm = normalize_channels(data.train_budget, {&val_copy});
      data.val = std::move(val_copy);
      {
        std::vector<WindowSample> scratch_val;  // full-data stats for the source side
        normalize_channels(data.train_full, {});
        (void)scratch_val;
      }
      ++usable;
    } catch (const DataError& e) {
      data.failure = e.what();
    }
    prepared.emplace(name, std::move(data));
  }
  if (usable < 2) {
    throw DataError("cross-period matrix needs at least 2 periods with enough samples, got " +
                    std::to_string(usable));
  }

  // Source models train on their full period.
  std::map<std::string, HybridModel> source_models;
  std::map<std::string, std::optional<Scalar>> indigenous_auc;
  for (auto& [name, data] : prepared) {
    if (!data.failure.empty()) continue;
    TrainConfig cfg = config;
    cfg.seed = data.seed;

    HybridModel source =
        HybridModel::build(variant, static_level_widths, data.seed, hp);
    source.manifest().period = name;
    {
      // Source validation shares the full-data statistics.
      std::vector<WindowSample> src_val = data.val;
      train(source, data.train_full, src_val, cfg);
    }
    source_models.emplace(name, std::move(source));

    HybridModel indigenous =
        HybridModel::build(variant, static_level_widths, data.seed, hp);
    indigenous.manifest().period = name;
    train(indigenous, data.train_budget, data.val, cfg);
    const AucResult res = evaluate_auc(indigenous, data.val);
    indigenous_auc.emplace(name, res.auc);
  }

  TransferReport report;
  report.budget_days = budget_days;
  for (const auto& [src_name, src_data] : prepared) {
    for (const auto& [tgt_name, tgt_data] : prepared) {
      TransferCell cell;
      cell.source = src_name;
      cell.target = tgt_name;
      cell.seed = tgt_data.seed;
      if (!src_data.failure.empty() || !tgt_data.failure.empty()) {
        cell.note = !src_data.failure.empty() ? "source: " + src_data.failure
                                              : "target: " + tgt_data.failure;
        report.cells.push_back(std::move(cell));
        continue;
      }
      cell.available = true;
      cell.n_val = static_cast<int>(tgt_data.val.size());
      cell.indigenous_auc = indigenous_auc.at(tgt_name);
      if (src_name == tgt_name) {
        cell.transferred_auc = cell.indigenous_auc;  // self-transfer is identity
      } else {
        TrainConfig cfg = config;
        cfg.seed = tgt_data.seed;
        HybridModel target =
            HybridModel::build(variant, static_level_widths, tgt_data.seed, hp);
        target.manifest().period = tgt_name;
        const TransferPlan plan = default_plan(source_models.at(src_name));
        transplant(target, source_models.at(src_name), plan,
                   derive_seed(cfg.seed, "reinit/" + src_name + ">" + tgt_name));
        fine_tune(target, tgt_data.train_budget, tgt_data.val, cfg, plan);
        const AucResult res = evaluate_auc(target, tgt_data.val);
        cell.transferred_auc = res.auc;
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

void write_transfer_report(const std::vector<TransferReport>& reports,
                           const std::filesystem::path& path) {
  csv::Writer w({"budget_days", "source", "target", "transferred_auc",
                 "indigenous_auc", "delta", "n_val", "seed"});
  for (const auto& report : reports) {
    for (const auto& cell : report.cells) {
      std::string transferred = "NA", indigenous = "NA", delta = "NA";
      if (cell.transferred_auc) transferred = format_double(*cell.transferred_auc);
      if (cell.indigenous_auc) indigenous = format_double(*cell.indigenous_auc);
      if (cell.transferred_auc && cell.indigenous_auc) {
        delta = format_double(*cell.transferred_auc - *cell.indigenous_auc);
      }
      w.add_row({report.budget_days <= 0 ? "all" : std::to_string(report.budget_days),
                 cell.source, cell.target, transferred, indigenous, delta,
                 std::to_string(cell.n_val), std::to_string(cell.seed)});
    }
  }
  w.write_file(path);
}

}  // namespace boardcast
