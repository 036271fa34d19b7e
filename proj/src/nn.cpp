#include "boardcast/nn.hpp"

#include <cmath>

namespace boardcast::nn {

Scalar sigmoid(Scalar x) {
  // Split form stays finite for large |x| and keeps the output in (0, 1).
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

Conv1dParams make_conv1d(int out_channels, int in_channels, int kernel) {
  if (out_channels < 1 || in_channels < 1 || kernel < 1) {
    throw ShapeError("conv1d needs positive channel counts and kernel size");
  }
  Conv1dParams p;
  p.in_channels = in_channels;
  p.kernel = kernel;
  p.weight = Matrix::Zero(out_channels, in_channels * kernel);
  p.bias = Vector::Zero(out_channels);
  return p;
}

LstmParams make_lstm(int hidden, int input_dim) {
  if (hidden < 1 || input_dim < 1) {
    throw ShapeError("lstm needs positive hidden and input sizes");
  }
  LstmParams p;
  p.wx = Matrix::Zero(4 * hidden, input_dim);
  p.wh = Matrix::Zero(4 * hidden, hidden);
  p.bias = Vector::Zero(4 * hidden);
  return p;
}

DenseParams make_dense(int out, int in) {
  if (out < 1 || in < 1) throw ShapeError("dense needs positive extents");
  DenseParams p;
  p.weight = Matrix::Zero(out, in);
  p.bias = Vector::Zero(out);
  return p;
}

namespace {

void fill_uniform(Matrix& m, Scalar radius, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = rng.uniform(-radius, radius);
    }
  }
}

Scalar glorot_radius(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<Scalar>(fan_in + fan_out));
}

}  // namespace

void init_params(Conv1dParams& p, Rng& rng) {
  fill_uniform(p.weight, glorot_radius(p.in_channels * p.kernel, p.out_channels()), rng);
  p.bias.setZero();
}

void init_params(LstmParams& p, Rng& rng) {
  const int h = p.hidden();
  fill_uniform(p.wx, glorot_radius(p.input_dim(), h), rng);
  fill_uniform(p.wh, glorot_radius(h, h), rng);
  p.bias.setZero();
  p.bias.segment(h, h).setConstant(1.0);  // forget gate opens at init
}

void init_params(DenseParams& p, Rng& rng) {
  fill_uniform(p.weight, glorot_radius(static_cast<int>(p.weight.cols()),
                                       static_cast<int>(p.weight.rows())),
               rng);
  p.bias.setZero();
}

namespace {

/// P(c*k + j, t) = input(c, t + j); lets the convolution run as one matmul.
Matrix im2col(const Matrix& input, int kernel) {
  const auto channels = input.rows();
  const auto out_len = input.cols() - kernel + 1;
  Matrix patches(channels * kernel, out_len);
  for (Eigen::Index c = 0; c < channels; ++c) {
    for (int j = 0; j < kernel; ++j) {
      patches.row(c * kernel + j) = input.row(c).segment(j, out_len);
    }
  }
  return patches;
}

}  // namespace

Matrix conv1d_forward(const Matrix& input, const Conv1dParams& p) {
  if (input.rows() != p.in_channels) {
    throw ShapeError("conv1d: input has " + std::to_string(input.rows()) +
                     " channels, parameters expect " + std::to_string(p.in_channels));
  }
  if (input.cols() < p.kernel) {
    throw ShapeError("conv1d: sequence length " + std::to_string(input.cols()) +
                     " is shorter than kernel " + std::to_string(p.kernel));
  }
  Matrix out = p.weight * im2col(input, p.kernel);
  out.colwise() += p.bias;
  return out;
}

Matrix conv1d_backward(const Matrix& input, const Conv1dParams& p,
                       const Matrix& grad_output, Conv1dGrads& grads) {
  const auto out_len = input.cols() - p.kernel + 1;
  if (grad_output.rows() != p.out_channels() || grad_output.cols() != out_len) {
    throw ShapeError("conv1d backward: gradient shape mismatch");
  }
  if (grads.weight.size() == 0) {
    grads.weight = Matrix::Zero(p.weight.rows(), p.weight.cols());
    grads.bias = Vector::Zero(p.bias.size());
  }
  const Matrix patches = im2col(input, p.kernel);
  grads.weight += grad_output * patches.transpose();
  grads.bias += grad_output.rowwise().sum();

  const Matrix dpatches = p.weight.transpose() * grad_output;
  Matrix grad_input = Matrix::Zero(input.rows(), input.cols());
  for (Eigen::Index c = 0; c < input.rows(); ++c) {
    for (int j = 0; j < p.kernel; ++j) {
      grad_input.row(c).segment(j, out_len) += dpatches.row(c * p.kernel + j);
    }
  }
  return grad_input;
}

Matrix lstm_forward(const Matrix& input, const LstmParams& p, LstmCache* cache) {
  if (input.cols() != p.input_dim()) {
    throw ShapeError("lstm: input dimension " + std::to_string(input.cols()) +
                     " does not match parameters (" + std::to_string(p.input_dim()) +
                     ")");
  }
  const auto steps = input.rows();
  const int h = p.hidden();

  Matrix hs(steps, h);
  Vector h_prev = Vector::Zero(h);
  Vector c_prev = Vector::Zero(h);

  if (cache) {
    cache->input = input;
    cache->i.resize(steps, h);
    cache->f.resize(steps, h);
    cache->g.resize(steps, h);
    cache->o.resize(steps, h);
    cache->c.resize(steps, h);
    cache->c_tanh.resize(steps, h);
    cache->h.resize(steps, h);
  }

  for (Eigen::Index t = 0; t < steps; ++t) {
    const Vector pre = p.wx * input.row(t).transpose() + p.wh * h_prev + p.bias;
    Vector gi(h), gf(h), gg(h), go(h);
    for (int k = 0; k < h; ++k) {
      gi[k] = sigmoid(pre[k]);
      gf[k] = sigmoid(pre[h + k]);
      gg[k] = std::tanh(pre[2 * h + k]);
      go[k] = sigmoid(pre[3 * h + k]);
    }
    const Vector c = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
    const Vector c_tanh = c.array().tanh();
    const Vector h_t = go.cwiseProduct(c_tanh);

    hs.row(t) = h_t.transpose();
    if (cache) {
      cache->i.row(t) = gi.transpose();
      cache->f.row(t) = gf.transpose();
      cache->g.row(t) = gg.transpose();
      cache->o.row(t) = go.transpose();
      cache->c.row(t) = c.transpose();
      cache->c_tanh.row(t) = c_tanh.transpose();
      cache->h.row(t) = h_t.transpose();
    }
    h_prev = h_t;
    c_prev = c;
  }
  return hs;
}

Matrix lstm_backward(const LstmParams& p, const LstmCache& cache,
                     const Matrix& grad_output, LstmGrads& grads) {
  const auto steps = cache.input.rows();
  const int h = p.hidden();
  if (grad_output.rows() != steps || grad_output.cols() != h) {
    throw ShapeError("lstm backward: gradient shape mismatch");
  }
  if (grads.wx.size() == 0) {
    grads.wx = Matrix::Zero(p.wx.rows(), p.wx.cols());
    grads.wh = Matrix::Zero(p.wh.rows(), p.wh.cols());
    grads.bias = Vector::Zero(p.bias.size());
  }

  Matrix grad_input = Matrix::Zero(steps, p.input_dim());
  Vector dh_next = Vector::Zero(h);
  Vector dc_next = Vector::Zero(h);

  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const Vector gi = cache.i.row(t), gf = cache.f.row(t), gg = cache.g.row(t),
                 go = cache.o.row(t), c_tanh = cache.c_tanh.row(t);
    const Vector c_prev =
        t > 0 ? Vector(cache.c.row(t - 1)) : Vector(Vector::Zero(h));
    const Vector h_prev =
        t > 0 ? Vector(cache.h.row(t - 1)) : Vector(Vector::Zero(h));

    const Vector dh = grad_output.row(t).transpose() + dh_next;
    const Vector dc = dc_next.array() +
                      dh.array() * go.array() * (1.0 - c_tanh.array().square());

    Vector dpre(4 * h);
    dpre.head(h) =
        dc.cwiseProduct(gg).array() * gi.array() * (1.0 - gi.array());
    dpre.segment(h, h) =
        dc.cwiseProduct(c_prev).array() * gf.array() * (1.0 - gf.array());
    dpre.segment(2 * h, h) =
        dc.cwiseProduct(gi).array() * (1.0 - gg.array().square());
    dpre.tail(h) =
        dh.cwiseProduct(c_tanh).array() * go.array() * (1.0 - go.array());

    grads.wx += dpre * cache.input.row(t);
    grads.wh += dpre * h_prev.transpose();
    grads.bias += dpre;

    grad_input.row(t) = (p.wx.transpose() * dpre).transpose();
    dh_next = p.wh.transpose() * dpre;
    dc_next = dc.cwiseProduct(gf);
  }
  return grad_input;
}

Vector dense_forward(const Vector& input, const DenseParams& p) {
  if (input.size() != p.weight.cols()) {
    throw ShapeError("dense: input size " + std::to_string(input.size()) +
                     " does not match weight columns " +
                     std::to_string(p.weight.cols()));
  }
  return p.weight * input + p.bias;
}

Vector dense_backward(const Vector& input, const DenseParams& p,
                      const Vector& grad_output, DenseGrads& grads) {
  if (grad_output.size() != p.weight.rows()) {
    throw ShapeError("dense backward: gradient shape mismatch");
  }
  if (grads.weight.size() == 0) {
    grads.weight = Matrix::Zero(p.weight.rows(), p.weight.cols());
    grads.bias = Vector::Zero(p.bias.size());
  }
  grads.weight += grad_output * input.transpose();
  grads.bias += grad_output;
  return p.weight.transpose() * grad_output;
}

Scalar finite_difference_check(const std::vector<GradCheckBlock>& blocks,
                               const std::function<Scalar()>& loss,
                               const std::function<void()>& compute_grads,
                               Scalar eps) {
  compute_grads();
  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(blocks.size());
  for (const auto& b : blocks) {
    analytic.emplace_back(b.grad, b.grad + b.size);
  }

  Scalar worst = 0.0;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto& b = blocks[bi];
    for (Eigen::Index k = 0; k < b.size; ++k) {
      const Scalar saved = b.param[k];
      b.param[k] = saved + eps;
      const Scalar up = loss();
      b.param[k] = saved - eps;
      const Scalar down = loss();
      b.param[k] = saved;

      const Scalar numeric = (up - down) / (2.0 * eps);
      const Scalar a = analytic[bi][static_cast<std::size_t>(k)];
      const Scalar rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, 0.5);
  }
  return m;
}

}  // namespace

Scalar grad_check_conv1d(std::uint64_t seed) {
  Rng rng(seed);
  const int in_ch = static_cast<int>(rng.uniform_int(1, 3));
  const int out_ch = static_cast<int>(rng.uniform_int(1, 4));
  const int kernel = static_cast<int>(rng.uniform_int(1, 3));
  const int len = kernel + static_cast<int>(rng.uniform_int(0, 5));

  auto p = make_conv1d(out_ch, in_ch, kernel);
  init_params(p, rng);
  const Matrix input = random_matrix(in_ch, len, rng);
  const Matrix projection = random_matrix(out_ch, len - kernel + 1, rng);

  Conv1dGrads grads;
  grads.weight = Matrix::Zero(p.weight.rows(), p.weight.cols());
  grads.bias = Vector::Zero(p.bias.size());
  auto loss = [&] { return (conv1d_forward(input, p).array() * projection.array()).sum(); };
  auto compute = [&] {
    grads.weight.setZero();
    grads.bias.setZero();
    conv1d_backward(input, p, projection, grads);
  };
  return finite_difference_check(
      {{p.weight.data(), grads.weight.data(), p.weight.size()},
       {p.bias.data(), grads.bias.data(), p.bias.size()}},
      loss, compute);
}

Scalar grad_check_lstm(std::uint64_t seed) {
  Rng rng(seed);
  const int hidden = static_cast<int>(rng.uniform_int(1, 4));
  const int dim = static_cast<int>(rng.uniform_int(1, 3));
  const int steps = static_cast<int>(rng.uniform_int(1, 5));

  auto p = make_lstm(hidden, dim);
  init_params(p, rng);
  const Matrix input = random_matrix(steps, dim, rng);
  const Matrix projection = random_matrix(steps, hidden, rng);

  LstmGrads grads;
  grads.wx = Matrix::Zero(p.wx.rows(), p.wx.cols());
  grads.wh = Matrix::Zero(p.wh.rows(), p.wh.cols());
  grads.bias = Vector::Zero(p.bias.size());
  auto loss = [&] {
    return (lstm_forward(input, p).array() * projection.array()).sum();
  };
  auto compute = [&] {
    grads.wx.setZero();
    grads.wh.setZero();
    grads.bias.setZero();
    LstmCache cache;
    lstm_forward(input, p, &cache);
    lstm_backward(p, cache, projection, grads);
  };
  return finite_difference_check(
      {{p.wx.data(), grads.wx.data(), p.wx.size()},
       {p.wh.data(), grads.wh.data(), p.wh.size()},
       {p.bias.data(), grads.bias.data(), p.bias.size()}},
      loss, compute);
}

Scalar grad_check_dense(std::uint64_t seed) {
  Rng rng(seed);
  const int out = static_cast<int>(rng.uniform_int(1, 8));
  const int in = static_cast<int>(rng.uniform_int(1, 8));

  auto p = make_dense(out, in);
  init_params(p, rng);
  const Vector input = random_matrix(in, 1, rng);
  const Vector projection = random_matrix(out, 1, rng);

  DenseGrads grads;
  grads.weight = Matrix::Zero(p.weight.rows(), p.weight.cols());
  grads.bias = Vector::Zero(p.bias.size());
  auto loss = [&] { return dense_forward(input, p).dot(projection); };
  auto compute = [&] {
    grads.weight.setZero();
    grads.bias.setZero();
    dense_backward(input, p, projection, grads);
  };
  return finite_difference_check(
      {{p.weight.data(), grads.weight.data(), p.weight.size()},
       {p.bias.data(), grads.bias.data(), p.bias.size()}},
      loss, compute);
}

}  // namespace boardcast::nn
