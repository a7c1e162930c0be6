#include "inceptive/layers.hpp"

#include <algorithm>
#include <cmath>

#include "inceptive/error.hpp"
#include "inceptive/ops.hpp"

namespace inceptive {

namespace {

void require_rank3(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw DimensionError(std::string(op) + ": expected B x L x f, got " + shape_str(t.shape()));
}

}  // namespace

ConvBranch ConvBranch::with_kernel(std::size_t k) {
  if (k == 2) return {2, {0, 1}};
  if (k == 0 || k % 2 == 0) throw ConfigError("unsupported kernel size " + std::to_string(k));
  return {k, {(k - 1) / 2, (k - 1) / 2}};
}

namespace {

// Gathers the zero-padded receptive field of every position of example b
// into a [L x k*d] matrix.
void im2col(const ConvBranch& branch, const Tensor& H, std::size_t b, std::vector<double>& cols) {
  const std::size_t len = H.dim(1);
  const std::size_t d = H.dim(2);
  const std::size_t k = branch.kernel_size;
  cols.assign(len * k * d, 0.0);
  const double* h = H.raw() + b * len * d;
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(branch.pad.left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(h + static_cast<std::size_t>(src) * d, d, cols.data() + (i * k + j) * d);
    }
  }
}

void check_conv_shapes(const ConvBranch& branch, const Tensor& weight, const Tensor& H) {
  require_rank3(H, "conv1d");
  if (branch.pad.left + branch.pad.right + 1 != branch.kernel_size) {
    throw ConfigError("conv1d: padding does not preserve length for kernel " + std::to_string(branch.kernel_size));
  }
  if (weight.rank() != 3 || weight.dim(1) != branch.kernel_size || weight.dim(2) != H.dim(2)) {
    throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " incompatible with kernel " +
                         std::to_string(branch.kernel_size) + " and input " + shape_str(H.shape()));
  }
}

}  // namespace

Tensor conv1d_forward(const ConvBranch& branch, const Tensor& weight, const Tensor& bias, const Tensor& H) {
  check_conv_shapes(branch, weight, H);
  const std::size_t batch = H.dim(0);
  const std::size_t len = H.dim(1);
  const std::size_t channels = weight.dim(0);
  const std::size_t window = branch.kernel_size * H.dim(2);
  if (bias.size() != channels) throw DimensionError("conv1d: bias " + shape_str(bias.shape()));

  Tensor Y({batch, len, channels});
  std::vector<double> cols;
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(branch, H, b, cols);
    double* y = Y.raw() + b * len * channels;
    for (std::size_t i = 0; i < len; ++i) std::copy_n(bias.raw(), channels, y + i * channels);
    kernels::gemm_nt(len, window, channels, cols.data(), weight.raw(), y);
  }
  return Y;
}

Conv1dGrads conv1d_backward(const ConvBranch& branch, const Tensor& weight, const Tensor& H, const Tensor& dY) {
  check_conv_shapes(branch, weight, H);
  const std::size_t batch = H.dim(0);
  const std::size_t len = H.dim(1);
  const std::size_t d = H.dim(2);
  const std::size_t k = branch.kernel_size;
  const std::size_t channels = weight.dim(0);
  if (dY.shape() != Shape{batch, len, channels}) {
    throw DimensionError("conv1d_backward: dY " + shape_str(dY.shape()) + " for input " + shape_str(H.shape()));
  }
  Conv1dGrads g{Tensor(H.shape()), Tensor(weight.shape()), Tensor({channels})};
  std::vector<double> cols;
  std::vector<double> dcols(len * k * d);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* dy = dY.raw() + b * len * channels;
    im2col(branch, H, b, cols);
    kernels::gemm_tn(channels, len, k * d, dy, cols.data(), g.d_weight.raw());
    std::fill(dcols.begin(), dcols.end(), 0.0);
    kernels::gemm_nn(len, channels, k * d, dy, weight.raw(), dcols.data());
    double* dh = g.d_input.raw() + b * len * d;
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(i + j) - static_cast<std::ptrdiff_t>(branch.pad.left);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const double* from = dcols.data() + (i * k + j) * d;
        double* to = dh + static_cast<std::size_t>(src) * d;
        for (std::size_t e = 0; e < d; ++e) to[e] += from[e];
      }
      for (std::size_t f = 0; f < channels; ++f) g.d_bias[f] += dy[i * channels + f];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

BatchNormState BatchNormState::fresh(std::size_t channels) {
  return BatchNormState{Tensor({channels}, 1.0), Tensor({channels}), Tensor({channels}), Tensor({channels}, 1.0)};
}

BatchNormResult batchnorm_forward(const Tensor& scale, const Tensor& shift, Tensor& running_mean,
                                  Tensor& running_var, double momentum, double eps, Mode mode, const Tensor& X) {
  const std::size_t channels = X.cols();
  const std::size_t n = X.rows();
  for (const Tensor* t : {&scale, &shift, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)}) {
    if (t->size() != channels) {
      throw DimensionError("batchnorm: state of shape " + shape_str(t->shape()) + " for input " + shape_str(X.shape()));
    }
  }
  BatchNormResult r{Tensor(X.shape()), BatchNormCache{Tensor(X.shape()), std::vector<double>(channels), mode}};
  std::vector<double> mean(channels, 0.0);
  std::vector<double> var(channels, 0.0);
  const double* x = X.raw();

  if (mode == Mode::train) {
    if (n < 2) throw DegenerateBatchError("batchnorm: train mode needs at least 2 positions, got " + std::to_string(n));
    for (std::size_t row = 0; row < n; ++row) {
      for (std::size_t c = 0; c < channels; ++c) mean[c] += x[row * channels + c];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t row = 0; row < n; ++row) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double dev = x[row * channels + c] - mean[c];
        var[c] += dev * dev;
      }
    }
    for (double& v : var) v /= static_cast<double>(n);
    for (std::size_t c = 0; c < channels; ++c) {
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c];
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }

  for (std::size_t c = 0; c < channels; ++c) r.cache.inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  double* xh = r.cache.x_hat.raw();
  double* y = r.y.raw();
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = row * channels + c;
      xh[i] = (x[i] - mean[c]) * r.cache.inv_std[c];
      y[i] = scale[c] * xh[i] + shift[c];
    }
  }
  return r;
}

Tensor batchnorm_apply(BatchNormState& state, const Tensor& X) {
  return batchnorm_forward(state.scale, state.shift, state.running_mean, state.running_var, state.momentum,
                           state.eps, state.mode, X)
      .y;
}

BatchNormGrads batchnorm_backward(const Tensor& scale, const BatchNormCache& cache, const Tensor& dY) {
  const std::size_t channels = dY.cols();
  const std::size_t n = dY.rows();
  if (cache.x_hat.shape() != dY.shape()) throw DimensionError("batchnorm_backward: dY " + shape_str(dY.shape()));
  BatchNormGrads g{Tensor(dY.shape()), Tensor({channels}), Tensor({channels})};
  const double* dy = dY.raw();
  const double* xh = cache.x_hat.raw();
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = row * channels + c;
      g.d_shift[c] += dy[i];
      g.d_scale[c] += dy[i] * xh[i];
    }
  }
  double* dx = g.dx.raw();
  if (cache.mode == Mode::eval) {
    for (std::size_t row = 0; row < n; ++row) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = row * channels + c;
        dx[i] = dy[i] * scale[c] * cache.inv_std[c];
      }
    }
    return g;
  }
  // dx = inv_std / N * (N * dxh - sum(dxh) - xh * sum(dxh * xh)), dxh = dy * gamma
  const double nn = static_cast<double>(n);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t i = row * channels + c;
      const double sum_dxh = scale[c] * g.d_shift[c];
      const double sum_dxh_xh = scale[c] * g.d_scale[c];
      dx[i] = cache.inv_std[c] / nn * (nn * dy[i] * scale[c] - sum_dxh - xh[i] * sum_dxh_xh);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& X) {
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) Y[i] = X[i] > 0.0 ? X[i] : 0.0;
  return Y;
}

Tensor relu_backward(const Tensor& X, const Tensor& dY) {
  if (X.shape() != dY.shape()) throw DimensionError("relu_backward: shape mismatch");
  Tensor dX(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) dX[i] = X[i] > 0.0 ? dY[i] : 0.0;
  return dX;
}

DropoutResult dropout(double rate, Mode mode, const Tensor& X, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  DropoutResult r{X, Tensor(X.shape(), 1.0)};
  if (mode == Mode::eval || rate == 0.0) return r;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double m = rng.uniform() < rate ? 0.0 : keep_scale;
    r.mask[i] = m;
    r.y[i] = X[i] * m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& dY) {
  if (mask.shape() != dY.shape()) throw DimensionError("dropout_backward: shape mismatch");
  Tensor dX(dY.shape());
  for (std::size_t i = 0; i < dY.size(); ++i) dX[i] = dY[i] * mask[i];
  return dX;
}

// ---------------------------------------------------------------------------

Tensor linear(const Tensor& W, const Tensor& b, const Tensor& X) {
  if (W.rank() != 2 || X.cols() != W.dim(0) || b.size() != W.dim(1)) {
    throw DimensionError("linear: weight " + shape_str(W.shape()) + ", bias " + shape_str(b.shape()) +
                         ", input " + shape_str(X.shape()));
  }
  const std::size_t out_dim = W.dim(1);
  Shape shape = X.shape();
  shape.back() = out_dim;
  Tensor Y(std::move(shape));
  const std::size_t rows = X.rows();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(b.raw(), out_dim, Y.raw() + r * out_dim);
  kernels::gemm_nn(rows, W.dim(0), out_dim, X.raw(), W.raw(), Y.raw());
  return Y;
}

LinearGrads linear_backward(const Tensor& W, const Tensor& X, const Tensor& dY) {
  const std::size_t in_dim = W.dim(0);
  const std::size_t out_dim = W.dim(1);
  if (X.cols() != in_dim || dY.cols() != out_dim || X.rows() != dY.rows()) {
    throw DimensionError("linear_backward: weight " + shape_str(W.shape()) + ", input " + shape_str(X.shape()) +
                         ", dY " + shape_str(dY.shape()));
  }
  const std::size_t rows = X.rows();
  LinearGrads g{Tensor(X.shape()), Tensor(W.shape()), Tensor({out_dim})};
  kernels::gemm_nt(rows, out_dim, in_dim, dY.raw(), W.raw(), g.dx.raw());
  kernels::gemm_tn(in_dim, rows, out_dim, X.raw(), dY.raw(), g.dw.raw());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < out_dim; ++j) g.db[j] += dY[r * out_dim + j];
  }
  return g;
}

// ---------------------------------------------------------------------------

LayerNormResult layer_norm(const Tensor& scale, const Tensor& shift, const Tensor& X, double eps) {
  const std::size_t f = X.cols();
  if (f < 2) throw DimensionError("layer_norm: feature axis must have at least 2 entries");
  if (scale.size() != f || shift.size() != f) throw DimensionError("layer_norm: affine shape mismatch");
  const std::size_t rows = X.rows();
  LayerNormResult r{Tensor(X.shape()), LayerNormCache{Tensor(X.shape()), std::vector<double>(rows)}};
  for (std::size_t row = 0; row < rows; ++row) {
    const double* x = X.raw() + row * f;
    double mean = 0.0;
    for (std::size_t j = 0; j < f; ++j) mean += x[j];
    mean /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(f);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    r.cache.inv_std[row] = inv_std;
    double* xh = r.cache.x_hat.raw() + row * f;
    double* y = r.y.raw() + row * f;
    for (std::size_t j = 0; j < f; ++j) {
      xh[j] = (x[j] - mean) * inv_std;
      y[j] = scale[j] * xh[j] + shift[j];
    }
  }
  return r;
}

LayerNormGrads layer_norm_backward(const Tensor& scale, const LayerNormCache& cache, const Tensor& dY) {
  const std::size_t f = dY.cols();
  const std::size_t rows = dY.rows();
  if (cache.x_hat.shape() != dY.shape()) throw DimensionError("layer_norm_backward: dY " + shape_str(dY.shape()));
  LayerNormGrads g{Tensor(dY.shape()), Tensor({f}), Tensor({f})};
  const double nf = static_cast<double>(f);
  std::vector<double> dxh(f);
  for (std::size_t row = 0; row < rows; ++row) {
    const double* dy = dY.raw() + row * f;
    const double* xh = cache.x_hat.raw() + row * f;
    double sum_dxh = 0.0;
    double sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      g.d_shift[j] += dy[j];
      g.d_scale[j] += dy[j] * xh[j];
      dxh[j] = dy[j] * scale[j];
      sum_dxh += dxh[j];
      sum_dxh_xh += dxh[j] * xh[j];
    }
    double* dx = g.dx.raw() + row * f;
    const double inv_std = cache.inv_std[row];
    for (std::size_t j = 0; j < f; ++j) dx[j] = inv_std / nf * (nf * dxh[j] - sum_dxh - xh[j] * sum_dxh_xh);
  }
  return g;
}

// ---------------------------------------------------------------------------

namespace {

void softmax_inplace(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

void check_qkv(const Tensor& Q, const Tensor& K, const Tensor& V) {
  require_rank3(Q, "attention");
  if (K.shape() != Q.shape() || V.shape() != Q.shape()) {
    throw DimensionError("attention: Q " + shape_str(Q.shape()) + ", K " + shape_str(K.shape()) + ", V " +
                         shape_str(V.shape()) + " must share a shape");
  }
}

}  // namespace

Tensor softmax_rows(const Tensor& X) {
  Tensor Y = X;
  const std::size_t n = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) softmax_inplace(Y.raw() + r * n, n);
  return Y;
}

AttentionResult scaled_dot_product_attention(const Tensor& Q, const Tensor& K, const Tensor& V) {
  check_qkv(Q, K, V);
  const std::size_t batch = Q.dim(0);
  const std::size_t len = Q.dim(1);
  const std::size_t dk = Q.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  AttentionResult r{Tensor(Q.shape()), Tensor({batch, len, len})};
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t qo = b * len * dk;
    double* w = r.weights.raw() + b * len * len;
    kernels::gemm_nt(len, dk, len, Q.raw() + qo, K.raw() + qo, w);
    for (std::size_t i = 0; i < len * len; ++i) w[i] *= scale;
    for (std::size_t i = 0; i < len; ++i) softmax_inplace(w + i * len, len);
    kernels::gemm_nn(len, len, dk, w, V.raw() + qo, r.out.raw() + qo);
  }
  return r;
}

AttentionGrads scaled_dot_product_attention_backward(const Tensor& Q, const Tensor& K, const Tensor& V,
                                                     const Tensor& weights, const Tensor& dOut) {
  check_qkv(Q, K, V);
  if (dOut.shape() != Q.shape()) throw DimensionError("attention_backward: dOut " + shape_str(dOut.shape()));
  const std::size_t batch = Q.dim(0);
  const std::size_t len = Q.dim(1);
  const std::size_t dk = Q.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  AttentionGrads g{Tensor(Q.shape()), Tensor(Q.shape()), Tensor(Q.shape())};
  std::vector<double> dw(len * len);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t qo = b * len * dk;
    const double* w = weights.raw() + b * len * len;
    const double* dout = dOut.raw() + qo;
    std::fill(dw.begin(), dw.end(), 0.0);
    kernels::gemm_nt(len, dk, len, dout, V.raw() + qo, dw.data());
    kernels::gemm_tn(len, len, dk, w, dout, g.dv.raw() + qo);
    // Softmax Jacobian per row, folded with the 1/sqrt(d_A) factor.
    for (std::size_t i = 0; i < len; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < len; ++j) dot += dw[i * len + j] * w[i * len + j];
      for (std::size_t j = 0; j < len; ++j) dw[i * len + j] = w[i * len + j] * (dw[i * len + j] - dot) * scale;
    }
    kernels::gemm_nn(len, len, dk, dw.data(), K.raw() + qo, g.dq.raw() + qo);
    kernels::gemm_tn(len, len, dk, dw.data(), Q.raw() + qo, g.dk.raw() + qo);
  }
  return g;
}

}  // namespace inceptive
