#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "inceptive/param_store.hpp"
#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

// Parameter names used by a multi-head attention block rooted at `prefix`:
//   <prefix>.head<i>.w_q / w_k / w_v   [d_in x d_A]
//   <prefix>.w_o                       [(h * d_A) x d_out]
std::string attention_param(const std::string& prefix, std::size_t head, const char* which);
std::string attention_output_param(const std::string& prefix);

// Adds Glorot-initialized projections for an attention block to `params`.
void add_attention_params(ParamStore& params, const std::string& prefix, std::size_t n_heads, std::size_t d_in,
                          std::size_t head_dim, std::size_t d_out, Rng& rng);

struct MultiHeadCache {
  Tensor input;
  std::vector<Tensor> q, k, v, weights;
  Tensor concat;
};

struct MultiHeadResult {
  Tensor out;      // [B x L x d_out]
  Tensor weights;  // [B x h x L x L], per-head attention before the output projection
  MultiHeadCache cache;
};

/// Per head: Q = X W_Q, K = X W_K, V = X W_V, softmax(Q K^T / sqrt(d_A)) V;
/// heads are concatenated and projected by W_O. No biases, no residual.
MultiHeadResult multi_head_attention(const ParamStore& params, const std::string& prefix, std::size_t n_heads,
                                     const Tensor& X);

/// Accumulates projection gradients into `params` and returns dX.
Tensor multi_head_attention_backward(ParamStore& params, const std::string& prefix, std::size_t n_heads,
                                     const MultiHeadCache& cache, const Tensor& dOut);

}  // namespace inceptive
