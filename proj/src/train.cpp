#include "boardcast/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace boardcast {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs_max < 0) throw ConfigError("epochs_max must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(split_fraction > 0 && split_fraction < 1)) {
    throw ConfigError("split_fraction must lie strictly inside (0, 1)");
  }
}

std::pair<std::vector<WindowSample>, std::vector<WindowSample>> split_chronological(
    std::vector<WindowSample> samples, Scalar fraction, int horizon) {
  if (!(fraction > 0 && fraction < 1)) {
    throw ConfigError("split fraction must lie strictly inside (0, 1)");
  }
  if (samples.size() < 2) {
    throw DataError("chronological split needs at least 2 samples, got " +
                    std::to_string(samples.size()));
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const WindowSample& a, const WindowSample& b) {
                     return a.anchor_date < b.anchor_date;
                   });

  const auto n = samples.size();
  const auto boundary = static_cast<std::size_t>(
      std::floor(fraction * static_cast<Scalar>(n)));
  if (boundary >= n) {
    throw DataError("chronological split leaves an empty validation set");
  }

  std::vector<WindowSample> validation(samples.begin() + static_cast<std::ptrdiff_t>(boundary),
                                       samples.end());
  const Date first_val_anchor = validation.front().anchor_date;

  // Purge: drop training samples whose label window (anchor+1 .. anchor+H)
  // reaches the first validation anchor or beyond.
  std::vector<WindowSample> train;
  for (std::size_t i = 0; i < boundary; ++i) {
    if (samples[i].anchor_date + horizon < first_val_anchor) {
      train.push_back(std::move(samples[i]));
    }
  }
  if (train.empty()) {
    throw DataError("too few samples to satisfy the purged split: no training "
                    "anchor ends its label window before the first validation "
                    "anchor " + first_val_anchor.to_string());
  }
  if (validation.empty()) {
    throw DataError("chronological split leaves an empty validation set");
  }
  return {std::move(train), std::move(validation)};
}

Scalar bce_loss(const std::vector<Scalar>& probabilities,
                const std::vector<int>& labels) {
  if (probabilities.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(probabilities.size()) +
                     " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  if (probabilities.empty()) throw DataError("bce_loss: empty input");
  constexpr Scalar floor = 1e-12;
  Scalar total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const Scalar p = std::clamp(probabilities[i], floor, 1.0 - floor);
    total += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<Scalar>(probabilities.size());
}

AucResult evaluate_auc(const HybridModel& model, const std::vector<WindowSample>& samples) {
  std::vector<Scalar> scores;
  std::vector<int> labels;
  scores.reserve(samples.size());
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    scores.push_back(model.forward(s));
    labels.push_back(s.label);
  }
  return auc(scores, labels);
}

namespace {

/// Adam state aligned with the tensor_refs enumeration order.
class AdamOptimizer {
 public:
  AdamOptimizer(const std::vector<TensorRef>& refs, const TrainConfig& cfg)
      : lr_(cfg.learning_rate),
        beta1_(cfg.adam_beta1),
        beta2_(cfg.adam_beta2),
        eps_(cfg.adam_epsilon) {
    for (const auto& r : refs) {
      m_.emplace_back(Vector::Zero(r.size));
      v_.emplace_back(Vector::Zero(r.size));
    }
  }

  void step(std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
            const std::set<std::string>& freeze) {
    ++t_;
    const Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (freeze.count(params[i].layer)) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (Eigen::Index k = 0; k < params[i].size; ++k) {
        const Scalar g = grads[i].data[k];
        m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
        v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
        const Scalar m_hat = m[k] / bc1;
        const Scalar v_hat = v[k] / bc2;
        params[i].data[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
      }
    }
  }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Vector> m_, v_;
};

std::string fingerprint_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RunManifest train(HybridModel& model, const std::vector<WindowSample>& train_set,
                  const std::vector<WindowSample>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw DataError("training requires non-empty train and validation splits");
  }
  for (const auto& name : config.freeze) {
    const auto names = model.layer_names();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw ConfigError("freeze mask names unknown layer '" + name + "'");
    }
  }

  const auto start_time = std::chrono::steady_clock::now();

  RunManifest manifest;
  manifest.config = config;
  std::uint64_t fp = fingerprint(train_set);
  const std::uint64_t val_fp = fingerprint(val_set);
  fp = fnv1a64(&val_fp, sizeof val_fp, fp);
  manifest.dataset_fingerprint = fingerprint_hex(fp);
  manifest.n_train = static_cast<int>(train_set.size());
  manifest.n_val = static_cast<int>(val_set.size());

  long n_pos = 0;
  for (const auto& s : train_set) n_pos += s.label;
  const long n_neg = static_cast<long>(train_set.size()) - n_pos;
  Scalar pos_weight = 1.0;
  if (n_pos > 0 &&
      static_cast<Scalar>(n_neg) >
          config.imbalance_ratio_for_weighting * static_cast<Scalar>(n_pos)) {
    pos_weight = static_cast<Scalar>(n_neg) / static_cast<Scalar>(n_pos);
  }
  manifest.pos_weight = pos_weight;

  Rng rng(derive_seed(config.seed, "train-shuffle"));
  auto params = tensor_refs(model.params());
  ParamSet grad_set = model.make_grads();
  auto grads = tensor_refs(grad_set);
  AdamOptimizer adam(params, config);

  constexpr Scalar floor = 1e-12;
  ParamSet best_params = model.params();
  Scalar best_auc = -1.0;
  int best_epoch = -1;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  int epoch = 0;
  for (; epoch < config.epochs_max; ++epoch) {
    rng.shuffle(order);

    Scalar epoch_loss_sum = 0.0;
    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(config.batch_size));
      const auto batch_n = static_cast<Scalar>(batch_end - batch_start);

      grad_set.set_zero();
      Scalar batch_loss = 0.0;
      for (std::size_t k = batch_start; k < batch_end; ++k) {
        const WindowSample& s = train_set[order[k]];
        HybridModel::Tape tape;
        const Scalar p = model.forward(s.temporal, s.static_vec, tape);
        const Scalar pc = std::clamp(p, floor, 1.0 - floor);
        const Scalar w = s.label == 1 ? pos_weight : 1.0;
        batch_loss += w * (s.label == 1 ? -std::log(pc) : -std::log(1.0 - pc));
        // d(loss)/dp of the clamped BCE, scaled for the batch mean.
        const Scalar dp = w * (s.label == 1 ? -1.0 / pc : 1.0 / (1.0 - pc)) / batch_n;
        model.backward(tape, dp, grad_set);
      }
      batch_loss /= batch_n;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training loss became non-finite at epoch " +
                           std::to_string(epoch + 1) +
                           "; try a lower learning rate");
      }
      epoch_loss_sum += batch_loss * batch_n;
      adam.step(params, grads, config.freeze);
    }

    EpochStat stat;
    stat.epoch = epoch + 1;
    stat.train_loss = epoch_loss_sum / static_cast<Scalar>(train_set.size());
    const AucResult val = evaluate_auc(model, val_set);
    if (val.auc) stat.val_auc = *val.auc;
    manifest.curve.push_back(stat);

    if (val.auc && *val.auc > best_auc) {
      best_auc = *val.auc;
      best_epoch = epoch + 1;
      best_params = model.params();
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= config.early_stop_patience) {
        ++epoch;
        break;
      }
    }
  }

  manifest.epochs_run = epoch;
  if (best_epoch >= 0) {
    model.params() = best_params;
    manifest.best_epoch = best_epoch;
    manifest.best_val_auc = best_auc;
  }

  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return manifest;
}

std::string manifest_to_json(const RunManifest& m) {
  json doc;
  json cfg;
  cfg["epochs_max"] = m.config.epochs_max;
  cfg["batch_size"] = m.config.batch_size;
  cfg["learning_rate"] = m.config.learning_rate;
  cfg["adam_beta1"] = m.config.adam_beta1;
  cfg["adam_beta2"] = m.config.adam_beta2;
  cfg["adam_epsilon"] = m.config.adam_epsilon;
  cfg["early_stop_patience"] = m.config.early_stop_patience;
  cfg["split_fraction"] = m.config.split_fraction;
  cfg["seed"] = m.config.seed;
  cfg["freeze"] = m.config.freeze;
  doc["config"] = std::move(cfg);
  doc["dataset_fingerprint"] = m.dataset_fingerprint;
  doc["n_train"] = m.n_train;
  doc["n_val"] = m.n_val;
  doc["pos_weight"] = m.pos_weight;
  doc["epochs_run"] = m.epochs_run;
  doc["best_epoch"] = m.best_epoch;
  doc["best_val_auc"] =
      std::isnan(m.best_val_auc) ? json() : json(m.best_val_auc);
  doc["normalization"] = {{"applied", m.normalization.applied},
                          {"degenerate", m.normalization.degenerate},
                          {"mean", m.normalization.mean},
                          {"stddev", m.normalization.stddev}};
  doc["transferred"] = m.transferred;
  doc["wall_seconds"] = m.wall_seconds;
  json curve = json::array();
  for (const auto& stat : m.curve) {
    curve.push_back({{"epoch", stat.epoch},
                     {"train_loss", stat.train_loss},
                     {"val_auc", std::isnan(stat.val_auc) ? json() : json(stat.val_auc)}});
  }
  doc["curve"] = std::move(curve);
  return doc.dump(2);
}

}  // namespace boardcast
