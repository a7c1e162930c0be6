#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "inceptive/param_store.hpp"
#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

namespace kernels {

// Row-major GEMM kernels accumulating into c.
// gemm_nn: c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept;
// gemm_nt: c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept;
// gemm_tn: c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept;

}  // namespace kernels

/// Matrix product a[m x k] * b[k x n]. `a` may carry leading batch axes
/// ([... x m x k]); they are broadcast against the single `b`.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Concatenates [B x L x c_i] tensors along the feature axis.
Tensor concat_features(std::span<const Tensor> parts);
Tensor concat_features(std::initializer_list<const Tensor*> parts);

/// Inverse of concat_features: splits the last axis into slices of the given widths.
std::vector<Tensor> split_features(const Tensor& x, std::span<const std::size_t> widths);

/// Glorot-uniform tensor: entries in U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Global L2 norm over every gradient in the store.
double global_grad_norm(const ParamStore& params);

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. Throws NumericError on non-finite grads.
double clip_global_norm(ParamStore& params, double max_norm);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

using ScalarFn = std::function<double(const ParamStore&)>;

/// Central-difference check of the gradients already stored in `params`.
///
/// Each entry is perturbed by +-h in place (and restored); the relative error
/// per entry is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Throws NumericError if `f` returns a non-finite value.
GradCheckReport grad_check_report(const ScalarFn& f, ParamStore& params, double h);
double grad_check(const ScalarFn& f, ParamStore& params, double h);

}  // namespace inceptive
