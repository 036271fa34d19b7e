#pragma once

#include "boardcast/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace boardcast::nn {

// Elementwise activations. sigmoid(0) is exactly 0.5 and the output is
// strictly inside (0, 1) for any finite input.
Scalar sigmoid(Scalar x);
Matrix relu(const Matrix& x);
Vector relu(const Vector& x);

/// Valid (no padding) 1-D convolution, stride 1. Weight row o holds the
/// kernel for output channel o, flattened as w[o][c][j] = weight(o, c*k + j).
struct Conv1dParams {
  Matrix weight;  // out_channels x (in_channels * kernel)
  Vector bias;    // out_channels
  int in_channels = 0;
  int kernel = 0;

  int out_channels() const { return static_cast<int>(bias.size()); }
};

/// Standard LSTM cell parameters; gate row blocks are ordered i, f, g, o.
struct LstmParams {
  Matrix wx;    // 4*hidden x input_dim
  Matrix wh;    // 4*hidden x hidden
  Vector bias;  // 4*hidden

  int hidden() const { return static_cast<int>(wh.cols()); }
  int input_dim() const { return static_cast<int>(wx.cols()); }
};

struct DenseParams {
  Matrix weight;  // out x in
  Vector bias;    // out
};

Conv1dParams make_conv1d(int out_channels, int in_channels, int kernel);
LstmParams make_lstm(int hidden, int input_dim);
DenseParams make_dense(int out, int in);

// Initialization: weights uniform in [-r, r] with r = sqrt(6/(fan_in+fan_out)),
// biases zero except the LSTM forget gate, which starts at 1.0.
void init_params(Conv1dParams& p, Rng& rng);
void init_params(LstmParams& p, Rng& rng);
void init_params(DenseParams& p, Rng& rng);

/// out[o][t] = bias[o] + sum_c sum_j w[o][c][j] * in[c][t+j].
/// input is in_channels x T; output is out_channels x (T - k + 1).
Matrix conv1d_forward(const Matrix& input, const Conv1dParams& p);

struct Conv1dGrads {
  Matrix weight;
  Vector bias;
};

/// Accumulates parameter gradients into `grads` and returns the input gradient.
Matrix conv1d_backward(const Matrix& input, const Conv1dParams& p,
                       const Matrix& grad_output, Conv1dGrads& grads);

/// Per-step activations cached by lstm_forward for backpropagation through time.
struct LstmCache {
  Matrix input;  // T x d
  Matrix i, f, g, o;        // T x hidden, post-activation gates
  Matrix c, c_tanh, h;      // T x hidden
};

/// Runs the cell over input rows (time-major, T x d) from zero initial
/// state; returns the hidden sequence (T x hidden). Pass a cache to enable
/// lstm_backward.
Matrix lstm_forward(const Matrix& input, const LstmParams& p,
                    LstmCache* cache = nullptr);

struct LstmGrads {
  Matrix wx, wh;
  Vector bias;
};

/// Backpropagation through time; grad_output is T x hidden (zero rows for
/// unused steps). Accumulates into `grads`, returns the input gradient (T x d).
Matrix lstm_backward(const LstmParams& p, const LstmCache& cache,
                     const Matrix& grad_output, LstmGrads& grads);

/// out = W * in + b.
Vector dense_forward(const Vector& input, const DenseParams& p);

struct DenseGrads {
  Matrix weight;
  Vector bias;
};

Vector dense_backward(const Vector& input, const DenseParams& p,
                      const Vector& grad_output, DenseGrads& grads);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

/// Mutable view of one parameter block plus its gradient accumulator.
struct GradCheckBlock {
  Scalar* param = nullptr;
  const Scalar* grad = nullptr;
  Eigen::Index size = 0;
};

/**
 * Central finite differences (eps = 1e-4) against analytic gradients.
 * `loss` recomputes the scalar objective from current parameter values;
 * `compute_grads` refreshes the analytic gradients the blocks point at.
 * Returns max over parameters of |analytic - numeric| /
 * max(1e-8, |analytic| + |numeric|).
 */
Scalar finite_difference_check(const std::vector<GradCheckBlock>& blocks,
                               const std::function<Scalar()>& loss,
                               const std::function<void()>& compute_grads,
                               Scalar eps = 1e-4);

/// Seeded single-layer checks on small random shapes (every extent <= 8).
Scalar grad_check_conv1d(std::uint64_t seed);
Scalar grad_check_lstm(std::uint64_t seed);
Scalar grad_check_dense(std::uint64_t seed);

}  // namespace boardcast::nn
