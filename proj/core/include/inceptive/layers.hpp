#pragma once

#include <cstddef>

#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// 1-D convolution over the sequence axis.

struct Padding {
  std::size_t left = 0;
  std::size_t right = 0;
  friend bool operator==(const Padding&, const Padding&) = default;
};

/// Geometry of one inception branch. Kernel 2 pads one zero on the right;
/// odd kernels pad (k-1)/2 zeros on each side, so the output keeps length L.
struct ConvBranch {
  std::size_t kernel_size = 0;
  Padding pad;

  // Throws ConfigError for even kernels other than 2.
  static ConvBranch with_kernel(std::size_t k);
};

/// Y[b,i,f] = sum_j weight[f,j,:] . H_padded[b,i+j,:] + bias[f]
/// weight: [c x k x d], bias: [c], H: [B x L x d] -> [B x L x c].
Tensor conv1d_forward(const ConvBranch& branch, const Tensor& weight, const Tensor& bias, const Tensor& H);

struct Conv1dGrads {
  Tensor d_input;
  Tensor d_weight;
  Tensor d_bias;
};

Conv1dGrads conv1d_backward(const ConvBranch& branch, const Tensor& weight, const Tensor& H, const Tensor& dY);

// ---------------------------------------------------------------------------
// Batch normalization over channels (last axis), pooling statistics across
// every batch and sequence position.

struct BatchNormState {
  Tensor scale;  // gamma [c]
  Tensor shift;  // beta [c]
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  Mode mode = Mode::train;

  static BatchNormState fresh(std::size_t channels);
};

struct BatchNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
  Mode mode = Mode::train;
};

struct BatchNormResult {
  Tensor y;
  BatchNormCache cache;
};

/// Train mode normalizes with batch statistics (population variance) and
/// updates the running estimates in `running_mean`/`running_var`; eval mode
/// reads them and leaves them untouched. Throws DegenerateBatchError when
/// train mode sees fewer than two positions.
BatchNormResult batchnorm_forward(const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                                  Tensor& running_var, double momentum, double eps, Mode mode, const Tensor& X);

// Convenience wrapper over batchnorm_forward using a self-contained state.
Tensor batchnorm_apply(BatchNormState& state, const Tensor& X);

struct BatchNormGrads {
  Tensor dx;
  Tensor d_scale;
  Tensor d_shift;
};

BatchNormGrads batchnorm_backward(const Tensor& scale, const BatchNormCache& cache, const Tensor& dY);

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& X);
// Gradient is zero wherever X <= 0.
Tensor relu_backward(const Tensor& X, const Tensor& dY);

struct DropoutResult {
  Tensor y;
  Tensor mask;  // 0 or 1/(1-p) per element
};

/// Inverted dropout. Eval mode, or p == 0, returns X unchanged with an all-ones
/// mask and consumes no random draws.
DropoutResult dropout(double rate, Mode mode, const Tensor& X, Rng& rng);
Tensor dropout_backward(const Tensor& mask, const Tensor& dY);

// ---------------------------------------------------------------------------

/// Y = X W + b over the last axis. W: [in x out], b: [out], X: [... x in].
Tensor linear(const Tensor& W, const Tensor& b, const Tensor& X);

struct LinearGrads {
  Tensor dx;
  Tensor dw;
  Tensor db;
};

LinearGrads linear_backward(const Tensor& W, const Tensor& X, const Tensor& dY);

// ---------------------------------------------------------------------------

struct LayerNormCache {
  Tensor x_hat;
  std::vector<double> inv_std;
};

struct LayerNormResult {
  Tensor y;
  LayerNormCache cache;
};

inline constexpr double kLayerNormEps = 1e-5;

LayerNormResult layer_norm(const Tensor& scale, const Tensor& shift, const Tensor& X, double eps = kLayerNormEps);

struct LayerNormGrads {
  Tensor dx;
  Tensor d_scale;
  Tensor d_shift;
};

LayerNormGrads layer_norm_backward(const Tensor& scale, const LayerNormCache& cache, const Tensor& dY);

// ---------------------------------------------------------------------------

/// Softmax over the last axis with max subtraction.
Tensor softmax_rows(const Tensor& X);

struct AttentionResult {
  Tensor out;      // [B x L x d_A]
  Tensor weights;  // [B x L x L], each row a probability distribution
};

/// softmax(Q K^T / sqrt(d_A)) V for Q, K, V of shape [B x L x d_A].
AttentionResult scaled_dot_product_attention(const Tensor& Q, const Tensor& K, const Tensor& V);

struct AttentionGrads {
  Tensor dq;
  Tensor dk;
  Tensor dv;
};

AttentionGrads scaled_dot_product_attention_backward(const Tensor& Q, const Tensor& K, const Tensor& V,
                                                     const Tensor& weights, const Tensor& dOut);

}  // namespace inceptive
