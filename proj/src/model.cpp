#include "boardcast/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <numeric>
#include <sstream>

namespace boardcast {

using nlohmann::json;

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::history_only: return "history_only";
    case ModelVariant::history_plus_cases: return "history_plus_cases";
    case ModelVariant::full: return "full";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& name) {
  if (name == "history_only") return ModelVariant::history_only;
  if (name == "history_plus_cases") return ModelVariant::history_plus_cases;
  if (name == "full") return ModelVariant::full;
  throw ConfigError("unknown model variant '" + name +
                    "' (expected history_only, history_plus_cases, or full)");
}

void ParamSet::set_zero() {
  temporal_conv.weight.setZero();
  temporal_conv.bias.setZero();
  lstm.wx.setZero();
  lstm.wh.setZero();
  lstm.bias.setZero();
  for (auto& c : static_convs) {
    c.weight.setZero();
    c.bias.setZero();
  }
  if (has_static) {
    static_dense.weight.setZero();
    static_dense.bias.setZero();
  }
  head0.weight.setZero();
  head0.bias.setZero();
  head1.weight.setZero();
  head1.bias.setZero();
}

namespace {

void push_matrix(std::vector<TensorRef>& refs, const std::string& layer,
                 const std::string& tensor, Matrix& m, std::vector<int> shape) {
  refs.push_back({layer, tensor, std::move(shape), m.data(), m.size()});
}

void push_vector(std::vector<TensorRef>& refs, const std::string& layer,
                 const std::string& tensor, Vector& v) {
  refs.push_back({layer, tensor, {static_cast<int>(v.size())}, v.data(), v.size()});
}

std::string static_conv_layer_name(std::size_t index) {
  return "static." + std::to_string(index) + ".conv1d";
}

}  // namespace

std::vector<TensorRef> tensor_refs(ParamSet& p) {
  std::vector<TensorRef> refs;
  push_matrix(refs, "temporal.0.conv1d", "weight", p.temporal_conv.weight,
              {p.temporal_conv.out_channels(), p.temporal_conv.in_channels,
               p.temporal_conv.kernel});
  push_vector(refs, "temporal.0.conv1d", "bias", p.temporal_conv.bias);
  push_matrix(refs, "temporal.1.lstm", "wx", p.lstm.wx,
              {static_cast<int>(p.lstm.wx.rows()), static_cast<int>(p.lstm.wx.cols())});
  push_matrix(refs, "temporal.1.lstm", "wh", p.lstm.wh,
              {static_cast<int>(p.lstm.wh.rows()), static_cast<int>(p.lstm.wh.cols())});
  push_vector(refs, "temporal.1.lstm", "bias", p.lstm.bias);
  for (std::size_t i = 0; i < p.static_convs.size(); ++i) {
    auto& c = p.static_convs[i];
    push_matrix(refs, static_conv_layer_name(i), "weight", c.weight,
                {c.out_channels(), c.in_channels, c.kernel});
    push_vector(refs, static_conv_layer_name(i), "bias", c.bias);
  }
  if (p.has_static) {
    const std::string name = "static." + std::to_string(p.static_convs.size()) + ".dense";
    push_matrix(refs, name, "weight", p.static_dense.weight,
                {static_cast<int>(p.static_dense.weight.rows()),
                 static_cast<int>(p.static_dense.weight.cols())});
    push_vector(refs, name, "bias", p.static_dense.bias);
  }
  push_matrix(refs, "head.0.dense", "weight", p.head0.weight,
              {static_cast<int>(p.head0.weight.rows()),
               static_cast<int>(p.head0.weight.cols())});
  push_vector(refs, "head.0.dense", "bias", p.head0.bias);
  push_matrix(refs, "head.1.dense", "weight", p.head1.weight,
              {static_cast<int>(p.head1.weight.rows()),
               static_cast<int>(p.head1.weight.cols())});
  push_vector(refs, "head.1.dense", "bias", p.head1.bias);
  return refs;
}

int HybridModel::static_input_length() const {
  return std::accumulate(level_widths_.begin(), level_widths_.end(), 0);
}

HybridModel HybridModel::build(ModelVariant variant,
                               const std::vector<int>& static_level_widths,
                               std::uint64_t seed, const Hyperparams& hp) {
  if (hp.input_length < hp.conv_kernel) {
    throw ConfigError("input_length must be at least the conv kernel size");
  }
  HybridModel m;
  m.variant_ = variant;
  m.hp_ = hp;
  m.manifest_.seed = seed;

  if (variant == ModelVariant::full) {
    if (static_level_widths.empty() ||
        std::accumulate(static_level_widths.begin(), static_level_widths.end(), 0) == 0) {
      throw ConfigError("full variant requires a static profile shape");
    }
    m.level_widths_ = static_level_widths;
  }

  auto& p = m.params_;
  p.has_static = (variant == ModelVariant::full);
  p.temporal_conv = nn::make_conv1d(hp.conv_filters, m.temporal_channels(), hp.conv_kernel);
  p.lstm = nn::make_lstm(hp.lstm_hidden, hp.conv_filters);

  int head_in = hp.lstm_hidden;
  if (p.has_static) {
    for (int w : m.level_widths_) {
      if (w < 0) throw ConfigError("static level widths must be non-negative");
      if (w > 0) p.static_convs.push_back(nn::make_conv1d(hp.static_conv_filters, 1, w));
    }
    const int concat = static_cast<int>(p.static_convs.size()) * hp.static_conv_filters;
    p.static_dense = nn::make_dense(hp.static_dense_units, concat);
    head_in += hp.static_dense_units;
  }
  p.head0 = nn::make_dense(hp.head_dense_units, head_in);
  p.head1 = nn::make_dense(1, hp.head_dense_units);

  // Each layer draws from its own seeded stream so reinitialization of one
  // layer never disturbs the others.
  const auto names = m.layer_names();
  for (const auto& name : names) m.reinit_layer(name, seed);
  return m;
}

std::vector<std::string> HybridModel::layer_names() const {
  std::vector<std::string> names{"temporal.0.conv1d", "temporal.1.lstm"};
  for (std::size_t i = 0; i < params_.static_convs.size(); ++i) {
    names.push_back(static_conv_layer_name(i));
  }
  if (params_.has_static) {
    names.push_back("static." + std::to_string(params_.static_convs.size()) + ".dense");
  }
  names.push_back("head.0.dense");
  names.push_back("head.1.dense");
  return names;
}

void HybridModel::reinit_layer(const std::string& layer_name, std::uint64_t seed) {
  Rng rng(derive_seed(seed, layer_name));
  if (layer_name == "temporal.0.conv1d") {
    nn::init_params(params_.temporal_conv, rng);
    return;
  }
  if (layer_name == "temporal.1.lstm") {
    nn::init_params(params_.lstm, rng);
    return;
  }
  for (std::size_t i = 0; i < params_.static_convs.size(); ++i) {
    if (layer_name == static_conv_layer_name(i)) {
      nn::init_params(params_.static_convs[i], rng);
      return;
    }
  }
  if (params_.has_static &&
      layer_name == "static." + std::to_string(params_.static_convs.size()) + ".dense") {
    nn::init_params(params_.static_dense, rng);
    return;
  }
  if (layer_name == "head.0.dense") {
    nn::init_params(params_.head0, rng);
    return;
  }
  if (layer_name == "head.1.dense") {
    nn::init_params(params_.head1, rng);
    return;
  }
  throw ConfigError("unknown layer name '" + layer_name + "'");
}

ParamSet HybridModel::make_grads() const {
  ParamSet g = params_;
  g.set_zero();
  return g;
}

Scalar HybridModel::forward(const Matrix& temporal, const Vector& statics,
                            Tape& tape) const {
  const int channels = temporal_channels();
  if (temporal.rows() != hp_.input_length) {
    throw ShapeError("temporal branch: window has " + std::to_string(temporal.rows()) +
                     " days, model expects " + std::to_string(hp_.input_length));
  }
  if (temporal.cols() < channels) {
    throw ShapeError("temporal branch: sample has " + std::to_string(temporal.cols()) +
                     " channels, model needs " + std::to_string(channels));
  }

  tape.conv_in = temporal.leftCols(channels).transpose();
  tape.conv_pre = nn::conv1d_forward(tape.conv_in, params_.temporal_conv);
  tape.conv_act = nn::relu(tape.conv_pre);
  const Matrix lstm_in = tape.conv_act.transpose();
  const Matrix hs = nn::lstm_forward(lstm_in, params_.lstm, &tape.lstm);
  const Vector h_last = hs.row(hs.rows() - 1);

  Vector head_in;
  if (params_.has_static) {
    const int want = static_input_length();
    if (statics.size() != want) {
      throw ShapeError("static branch: vector has " + std::to_string(statics.size()) +
                       " slots, model expects " + std::to_string(want));
    }
    tape.statics_in = statics;
    tape.level_pre.clear();
    Vector concat(static_cast<Eigen::Index>(params_.static_convs.size()) *
                  hp_.static_conv_filters);
    Eigen::Index filled = 0;
    int offset = 0;
    std::size_t conv_idx = 0;
    for (int w : level_widths_) {
      if (w == 0) continue;
      const Matrix level_in = statics.segment(offset, w).transpose();  // 1 x w
      const Vector pre =
          nn::conv1d_forward(level_in, params_.static_convs[conv_idx]).col(0);
      tape.level_pre.push_back(pre);
      concat.segment(filled, pre.size()) = nn::relu(pre);
      filled += pre.size();
      offset += w;
      ++conv_idx;
    }
    tape.static_concat = concat;
    tape.static_dense_pre = nn::dense_forward(concat, params_.static_dense);
    tape.static_out = nn::relu(tape.static_dense_pre);

    head_in.resize(h_last.size() + tape.static_out.size());
    head_in << h_last, tape.static_out;
  } else {
    head_in = h_last;
  }

  tape.head_in = head_in;
  tape.head0_pre = nn::dense_forward(head_in, params_.head0);
  tape.head0_act = nn::relu(tape.head0_pre);
  tape.head1_pre = nn::dense_forward(tape.head0_act, params_.head1)[0];
  tape.prob = nn::sigmoid(tape.head1_pre);
  if (!std::isfinite(tape.prob)) {
    throw NumericError("model forward produced a non-finite output");
  }
  tape.recorded = true;
  return tape.prob;
}

Scalar HybridModel::forward(const Matrix& temporal, const Vector& statics) const {
  Tape tape;
  return forward(temporal, statics, tape);
}

Scalar HybridModel::forward(const WindowSample& sample) const {
  return forward(sample.temporal, sample.static_vec);
}

void HybridModel::backward(const Tape& tape, Scalar grad_prob, ParamSet& grads) const {
  if (!tape.recorded) {
    throw StateError("backward called before any recorded forward pass");
  }

  const Scalar dpre1 = grad_prob * tape.prob * (1.0 - tape.prob);

  nn::DenseGrads g_head1{grads.head1.weight, grads.head1.bias};
  Vector dhead0_act = nn::dense_backward(tape.head0_act, params_.head1,
                                         Vector::Constant(1, dpre1), g_head1);
  grads.head1.weight = g_head1.weight;
  grads.head1.bias = g_head1.bias;

  const Vector dhead0_pre =
      dhead0_act.array() * (tape.head0_pre.array() > 0.0).cast<Scalar>();
  nn::DenseGrads g_head0{grads.head0.weight, grads.head0.bias};
  Vector dhead_in = nn::dense_backward(tape.head_in, params_.head0, dhead0_pre, g_head0);
  grads.head0.weight = g_head0.weight;
  grads.head0.bias = g_head0.bias;

  const int hidden = hp_.lstm_hidden;
  const Vector dh_last = dhead_in.head(hidden);

  if (params_.has_static) {
    const Vector dstatic_out = dhead_in.tail(dhead_in.size() - hidden);
    const Vector dsd_pre =
        dstatic_out.array() * (tape.static_dense_pre.array() > 0.0).cast<Scalar>();
    nn::DenseGrads g_sd{grads.static_dense.weight, grads.static_dense.bias};
    Vector dconcat =
        nn::dense_backward(tape.static_concat, params_.static_dense, dsd_pre, g_sd);
    grads.static_dense.weight = g_sd.weight;
    grads.static_dense.bias = g_sd.bias;

    int offset = 0;
    Eigen::Index used = 0;
    std::size_t conv_idx = 0;
    for (int w : level_widths_) {
      if (w == 0) continue;
      const Vector& pre = tape.level_pre[conv_idx];
      const Vector dlevel_act = dconcat.segment(used, pre.size());
      const Matrix dlevel_pre =
          (dlevel_act.array() * (pre.array() > 0.0).cast<Scalar>()).matrix();
      const Matrix level_in = tape.statics_in.segment(offset, w).transpose();
      nn::Conv1dGrads g_conv{grads.static_convs[conv_idx].weight,
                             grads.static_convs[conv_idx].bias};
      nn::conv1d_backward(level_in, params_.static_convs[conv_idx], dlevel_pre, g_conv);
      grads.static_convs[conv_idx].weight = g_conv.weight;
      grads.static_convs[conv_idx].bias = g_conv.bias;
      used += pre.size();
      offset += w;
      ++conv_idx;
    }
  }

  Matrix dlstm_out = Matrix::Zero(tape.lstm.h.rows(), tape.lstm.h.cols());
  dlstm_out.row(dlstm_out.rows() - 1) = dh_last.transpose();
  nn::LstmGrads g_lstm{grads.lstm.wx, grads.lstm.wh, grads.lstm.bias};
  const Matrix dlstm_in = nn::lstm_backward(params_.lstm, tape.lstm, dlstm_out, g_lstm);
  grads.lstm.wx = g_lstm.wx;
  grads.lstm.wh = g_lstm.wh;
  grads.lstm.bias = g_lstm.bias;

  const Matrix dconv_act = dlstm_in.transpose();
  const Matrix dconv_pre =
      (dconv_act.array() * (tape.conv_pre.array() > 0.0).cast<Scalar>()).matrix();
  nn::Conv1dGrads g_conv{grads.temporal_conv.weight, grads.temporal_conv.bias};
  nn::conv1d_backward(tape.conv_in, params_.temporal_conv, dconv_pre, g_conv);
  grads.temporal_conv.weight = g_conv.weight;
  grads.temporal_conv.bias = g_conv.bias;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization.

namespace {

json tensor_to_json(const TensorRef& ref) {
  json t;
  t["shape"] = ref.shape;
  json data = json::array();
  for (Eigen::Index i = 0; i < ref.size; ++i) {
    if (!std::isfinite(ref.data[i])) {
      throw NumericError("refusing to serialize non-finite parameter in layer " +
                         ref.layer);
    }
    data.push_back(ref.data[i]);
  }
  t["data"] = std::move(data);
  return t;
}

std::string fingerprint_hex(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string checkpoint_to_json(const HybridModel& model) {
  json doc;
  doc["format_version"] = kCheckpointFormatVersion;

  const auto& hp = model.hyperparams();
  json arch;
  arch["variant"] = to_string(model.variant());
  arch["input_length"] = hp.input_length;
  arch["conv_filters"] = hp.conv_filters;
  arch["conv_kernel"] = hp.conv_kernel;
  arch["lstm_hidden"] = hp.lstm_hidden;
  arch["static_conv_filters"] = hp.static_conv_filters;
  arch["static_dense_units"] = hp.static_dense_units;
  arch["head_dense_units"] = hp.head_dense_units;
  arch["static_level_widths"] = model.static_level_widths();
  doc["architecture"] = std::move(arch);

  const auto& man = model.manifest();
  json manifest;
  manifest["seed"] = man.seed;
  manifest["period"] = man.period;
  manifest["transferred"] = man.transferred;
  manifest["dataset_fingerprint"] = man.dataset_fingerprint;
  if (man.label_rule) {
    manifest["label_rule"] = {{"horizon", man.label_rule->horizon},
                              {"cutoff", man.label_rule->cutoff},
                              {"mode", to_string(man.label_rule->mode)}};
  }
  manifest["normalization"] = {{"applied", man.normalization.applied},
                               {"degenerate", man.normalization.degenerate},
                               {"mean", man.normalization.mean},
                               {"stddev", man.normalization.stddev}};
  doc["manifest"] = std::move(manifest);

  json params;
  auto refs = tensor_refs(const_cast<ParamSet&>(model.params()));
  for (const auto& ref : refs) {
    params[ref.layer][ref.tensor] = tensor_to_json(ref);
  }
  doc["params"] = std::move(params);
  return doc.dump(2);
}

HybridModel checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint parse error: ") + e.what());
  }

  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version " +
                            std::to_string(version) + " (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
    }

    const auto& arch = doc.at("architecture");
    Hyperparams hp;
    hp.input_length = arch.at("input_length").get<int>();
    hp.conv_filters = arch.at("conv_filters").get<int>();
    hp.conv_kernel = arch.at("conv_kernel").get<int>();
    hp.lstm_hidden = arch.at("lstm_hidden").get<int>();
    hp.static_conv_filters = arch.at("static_conv_filters").get<int>();
    hp.static_dense_units = arch.at("static_dense_units").get<int>();
    hp.head_dense_units = arch.at("head_dense_units").get<int>();
    const auto variant = variant_from_string(arch.at("variant").get<std::string>());
    const auto widths = arch.at("static_level_widths").get<std::vector<int>>();

    const auto& man_json = doc.at("manifest");
    HybridModel model =
        HybridModel::build(variant, widths, man_json.at("seed").get<std::uint64_t>(), hp);

    auto& man = model.manifest();
    man.period = man_json.at("period").get<std::string>();
    man.transferred = man_json.at("transferred").get<bool>();
    man.dataset_fingerprint = man_json.at("dataset_fingerprint").get<std::string>();
    if (man_json.contains("label_rule")) {
      LabelRule rule;
      rule.horizon = man_json.at("label_rule").at("horizon").get<int>();
      rule.cutoff = man_json.at("label_rule").at("cutoff").get<Scalar>();
      const auto mode = man_json.at("label_rule").at("mode").get<std::string>();
      rule.mode = mode == "point" ? LabelRule::Mode::point : LabelRule::Mode::any_in_horizon;
      man.label_rule = rule;
    }
    const auto& norm = man_json.at("normalization");
    man.normalization.applied = norm.at("applied").get<bool>();
    man.normalization.degenerate = norm.at("degenerate").get<bool>();
    man.normalization.mean = norm.at("mean").get<Scalar>();
    man.normalization.stddev = norm.at("stddev").get<Scalar>();

    const auto& params_json = doc.at("params");
    for (auto& ref : tensor_refs(model.params())) {
      if (!params_json.contains(ref.layer)) {
        throw CheckpointError("checkpoint is missing layer '" + ref.layer + "'");
      }
      const auto& layer_json = params_json.at(ref.layer);
      if (!layer_json.contains(ref.tensor)) {
        throw CheckpointError("checkpoint layer '" + ref.layer + "' is missing tensor '" +
                              ref.tensor + "'");
      }
      const auto& t = layer_json.at(ref.tensor);
      const auto shape = t.at("shape").get<std::vector<int>>();
      if (shape != ref.shape) {
        std::ostringstream oss;
        oss << "checkpoint tensor " << ref.layer << "." << ref.tensor
            << " has mismatched shape";
        throw CheckpointError(oss.str());
      }
      const auto& data = t.at("data");
      if (static_cast<Eigen::Index>(data.size()) != ref.size) {
        throw CheckpointError("checkpoint tensor " + ref.layer + "." + ref.tensor +
                              " has wrong element count");
      }
      for (Eigen::Index i = 0; i < ref.size; ++i) {
        ref.data[i] = data[static_cast<std::size_t>(i)].get<Scalar>();
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const HybridModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model) << '\n';
}

HybridModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

Scalar grad_check_model(ModelVariant variant, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model-grad-check"));
  Hyperparams hp;
  hp.input_length = 5;
  hp.conv_filters = 3;
  hp.conv_kernel = 2;
  hp.lstm_hidden = 3;
  hp.static_conv_filters = 2;
  hp.static_dense_units = 3;
  hp.head_dense_units = 3;

  std::vector<int> widths;
  if (variant == ModelVariant::full) {
    widths = {static_cast<int>(rng.uniform_int(1, 4)),
              static_cast<int>(rng.uniform_int(1, 4)),
              static_cast<int>(rng.uniform_int(1, 4))};
  }
  HybridModel model = HybridModel::build(variant, widths, seed, hp);

  const int channels = model.temporal_channels();
  Matrix temporal(hp.input_length, channels);
  for (Eigen::Index r = 0; r < temporal.rows(); ++r) {
    for (Eigen::Index c = 0; c < temporal.cols(); ++c) {
      temporal(r, c) = rng.normal(0.0, 1.0);
    }
  }
  Vector statics(model.static_input_length());
  for (Eigen::Index i = 0; i < statics.size(); ++i) statics[i] = rng.normal(0.0, 1.0);

  ParamSet grads = model.make_grads();
  auto loss = [&] { return model.forward(temporal, statics); };
  auto compute = [&] {
    grads.set_zero();
    HybridModel::Tape tape;
    model.forward(temporal, statics, tape);
    model.backward(tape, 1.0, grads);
  };

  auto prefs = tensor_refs(model.params());
  auto grefs = tensor_refs(grads);
  std::vector<nn::GradCheckBlock> blocks;
  for (std::size_t i = 0; i < prefs.size(); ++i) {
    blocks.push_back({prefs[i].data, grefs[i].data, prefs[i].size});
  }
  return nn::finite_difference_check(blocks, loss, compute);
}

}  // namespace boardcast
