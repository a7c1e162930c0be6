#include "inceptive/attention.hpp"

#include <algorithm>

#include "inceptive/error.hpp"
#include "inceptive/layers.hpp"
#include "inceptive/ops.hpp"

namespace inceptive {

std::string attention_param(const std::string& prefix, std::size_t head, const char* which) {
  return prefix + ".head" + std::to_string(head) + "." + which;
}

std::string attention_output_param(const std::string& prefix) { return prefix + ".w_o"; }

void add_attention_params(ParamStore& params, const std::string& prefix, std::size_t n_heads, std::size_t d_in,
                          std::size_t head_dim, std::size_t d_out, Rng& rng) {
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (const char* which : {"w_q", "w_k", "w_v"}) {
      params.add(attention_param(prefix, h, which), glorot_uniform({d_in, head_dim}, d_in, head_dim, rng));
    }
  }
  params.add(attention_output_param(prefix),
             glorot_uniform({n_heads * head_dim, d_out}, n_heads * head_dim, d_out, rng));
}

namespace {

// X[... x in] * W[in x out] without bias.
Tensor project(const Tensor& X, const Tensor& W) { return matmul(X, W); }

// Accumulates dW += X^T dY and dX += dY W^T.
void project_backward(const Tensor& X, const Tensor& W, const Tensor& dY, Tensor& dW, Tensor& dX) {
  kernels::gemm_tn(W.dim(0), X.rows(), W.dim(1), X.raw(), dY.raw(), dW.raw());
  kernels::gemm_nt(X.rows(), W.dim(1), W.dim(0), dY.raw(), W.raw(), dX.raw());
}

}  // namespace

MultiHeadResult multi_head_attention(const ParamStore& params, const std::string& prefix, std::size_t n_heads,
                                     const Tensor& X) {
  if (X.rank() != 3) throw DimensionError("multi_head_attention: expected B x L x d, got " + shape_str(X.shape()));
  if (n_heads == 0) throw ConfigError("multi_head_attention: need at least one head");
  const std::size_t batch = X.dim(0);
  const std::size_t len = X.dim(1);

  MultiHeadResult r;
  r.cache.input = X;
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  std::size_t head_dim = 0;
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Tensor& wq = params.value(attention_param(prefix, h, "w_q"));
    const Tensor& wk = params.value(attention_param(prefix, h, "w_k"));
    const Tensor& wv = params.value(attention_param(prefix, h, "w_v"));
    r.cache.q.push_back(project(X, wq));
    r.cache.k.push_back(project(X, wk));
    r.cache.v.push_back(project(X, wv));
    AttentionResult a = scaled_dot_product_attention(r.cache.q.back(), r.cache.k.back(), r.cache.v.back());
    head_dim = a.out.dim(2);
    heads.push_back(std::move(a.out));
    r.cache.weights.push_back(std::move(a.weights));
  }
  r.cache.concat = concat_features(std::span<const Tensor>(heads));
  const Tensor& wo = params.value(attention_output_param(prefix));
  if (wo.rank() != 2 || wo.dim(0) != n_heads * head_dim) {
    throw ConfigError("multi_head_attention: '" + attention_output_param(prefix) + "' has shape " +
                      shape_str(wo.shape()) + ", expected " + std::to_string(n_heads * head_dim) + " rows");
  }
  r.out = project(r.cache.concat, wo);

  r.weights = Tensor({batch, n_heads, len, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const double* src = r.cache.weights[h].raw() + b * len * len;
      std::copy_n(src, len * len, r.weights.raw() + (b * n_heads + h) * len * len);
    }
  }
  return r;
}

Tensor multi_head_attention_backward(ParamStore& params, const std::string& prefix, std::size_t n_heads,
                                     const MultiHeadCache& cache, const Tensor& dOut) {
  Parameter& wo = params.at(attention_output_param(prefix));
  Tensor d_concat(cache.concat.shape());
  project_backward(cache.concat, wo.value, dOut, wo.grad, d_concat);

  const std::size_t head_dim = cache.q.front().dim(2);
  const std::vector<std::size_t> widths(n_heads, head_dim);
  std::vector<Tensor> d_heads = split_features(d_concat, widths);

  Tensor dX(cache.input.shape());
  for (std::size_t h = 0; h < n_heads; ++h) {
    AttentionGrads g =
        scaled_dot_product_attention_backward(cache.q[h], cache.k[h], cache.v[h], cache.weights[h], d_heads[h]);
    Parameter& wq = params.at(attention_param(prefix, h, "w_q"));
    Parameter& wk = params.at(attention_param(prefix, h, "w_k"));
    Parameter& wv = params.at(attention_param(prefix, h, "w_v"));
    project_backward(cache.input, wq.value, g.dq, wq.grad, dX);
    project_backward(cache.input, wk.value, g.dk, wk.grad, dX);
    project_backward(cache.input, wv.value, g.dv, wv.grad, dX);
  }
  return dX;
}

}  // namespace inceptive
