#pragma once

#include "boardcast/dataset.hpp"
#include "boardcast/nn.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace boardcast {

/// The paper's three feature sets: breach history alone, history plus case
/// counts, and the full model with the static socioecological branch.
enum class ModelVariant { history_only, history_plus_cases, full };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& name);

/// Architecture hyperparameters. Defaults are desk-scale choices; all of
/// them are config-overridable and echoed into checkpoints and manifests.
struct Hyperparams {
  int input_length = 7;
  int conv_filters = 16;
  int conv_kernel = 3;
  int lstm_hidden = 32;
  int static_conv_filters = 8;
  int static_dense_units = 16;
  int head_dense_units = 16;
};

/// Every trainable tensor of the network. Doubles as the gradient
/// container, since gradients mirror parameter shapes exactly.
struct ParamSet {
  nn::Conv1dParams temporal_conv;
  nn::LstmParams lstm;
  std::vector<nn::Conv1dParams> static_convs;  // one per non-empty level
  nn::DenseParams static_dense;
  nn::DenseParams head0;
  nn::DenseParams head1;
  bool has_static = false;

  void set_zero();
};

/// Named view of one parameter (or gradient) tensor. `data` points at the
/// contiguous Eigen storage; `shape` is the logical extent list used by the
/// checkpoint format.
struct TensorRef {
  std::string layer;
  std::string tensor;
  std::vector<int> shape;
  Scalar* data = nullptr;
  Eigen::Index size = 0;
};

/// Enumerates tensors in a fixed order (stable across runs and between a
/// ParamSet and its gradient mirror).
std::vector<TensorRef> tensor_refs(ParamSet& params);

/// Training context echoed into checkpoints so a run can be reproduced.
struct ModelManifest {
  std::uint64_t seed = 0;
  std::string period;
  std::optional<LabelRule> label_rule;
  ChannelNormalization normalization;
  std::string dataset_fingerprint;
  bool transferred = false;
};

/**
 * Two-branch hybrid CNN-LSTM binary forecaster.
 *
 * Temporal branch: conv1d over the day axis, ReLU, then an LSTM whose final
 * hidden state summarizes the window. Static branch (full variant only):
 * the flattened profile is sliced per socioecological level, each level is
 * mixed by a level-wide convolution (kernel spanning the level), ReLU'd,
 * concatenated, and projected through a dense layer. The head concatenates
 * branch outputs and maps them through dense-ReLU-dense-sigmoid to a single
 * probability.
 */
class HybridModel {
 public:
  /// Deterministic construction: identical (variant, widths, seed,
  /// hyperparameters) give bit-identical parameters.
  static HybridModel build(ModelVariant variant,
                           const std::vector<int>& static_level_widths,
                           std::uint64_t seed, const Hyperparams& hp = {});

  ModelVariant variant() const { return variant_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const std::vector<int>& static_level_widths() const { return level_widths_; }

  /// Channels the temporal branch consumes (1, or 2 when cases are in play).
  int temporal_channels() const {
    return variant_ == ModelVariant::history_only ? 1 : 2;
  }
  int static_input_length() const;

  /// Activations cached by a recording forward pass.
  struct Tape {
    bool recorded = false;
    Matrix conv_in, conv_pre, conv_act;
    nn::LstmCache lstm;
    Vector statics_in;
    std::vector<Vector> level_pre;
    Vector static_concat, static_dense_pre, static_out;
    Vector head_in, head0_pre, head0_act;
    Scalar head1_pre = 0.0;
    Scalar prob = 0.0;
  };

  /// Probability in (0, 1). Extra temporal channels and static content the
  /// variant does not consume are ignored.
  Scalar forward(const Matrix& temporal, const Vector& statics) const;
  Scalar forward(const WindowSample& sample) const;
  Scalar forward(const Matrix& temporal, const Vector& statics, Tape& tape) const;

  /// Reverse pass from d(loss)/d(probability); accumulates into `grads`.
  /// Throws StateError if the tape was never recorded.
  void backward(const Tape& tape, Scalar grad_prob, ParamSet& grads) const;

  /// Zero-filled gradient container matching this model's shapes.
  ParamSet make_grads() const;

  std::vector<std::string> layer_names() const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  ModelManifest& manifest() { return manifest_; }
  const ModelManifest& manifest() const { return manifest_; }

  /// Re-draws one layer's parameters from a fresh seeded stream, matching
  /// what build() would have produced for that seed.
  void reinit_layer(const std::string& layer_name, std::uint64_t seed);

 private:
  HybridModel() = default;

  ModelVariant variant_ = ModelVariant::history_only;
  Hyperparams hp_;
  std::vector<int> level_widths_;
  ParamSet params_;
  ModelManifest manifest_;
};

// Checkpoint serialization: a self-describing JSON document with decimal
// float encoding that round-trips bit-exactly.
inline constexpr int kCheckpointFormatVersion = 1;

std::string checkpoint_to_json(const HybridModel& model);
HybridModel checkpoint_from_json(const std::string& text);
void save_checkpoint(const HybridModel& model, const std::filesystem::path& path);
HybridModel load_checkpoint(const std::filesystem::path& path);

/// Finite-difference check of the assembled network (loss = output
/// probability) on a small seeded instance; returns the max relative error.
Scalar grad_check_model(ModelVariant variant, std::uint64_t seed);

}  // namespace boardcast
