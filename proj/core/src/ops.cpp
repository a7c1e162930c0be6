#include "inceptive/ops.hpp"

#include <algorithm>
#include <cmath>

#include "inceptive/error.hpp"

namespace inceptive {

namespace kernels {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) noexcept {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Tensor out(std::move(out_shape));
  // Leading batch axes fold into the row count.
  kernels::gemm_nn(a.rows(), k, n, a.raw(), b.raw(), out.raw());
  return out;
}

namespace {

Tensor concat_impl(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw DimensionError("concat_features: empty part list");
  const Tensor& first = *parts.front();
  if (first.rank() != 3) throw DimensionError("concat_features: expected B x L x c, got " + shape_str(first.shape()));
  const std::size_t batch = first.dim(0);
  const std::size_t len = first.dim(1);
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 3 || p->dim(0) != batch || p->dim(1) != len) {
      throw DimensionError("concat_features: part " + shape_str(p->shape()) + " does not match " +
                           shape_str(first.shape()) + " on batch/length");
    }
    total += p->dim(2);
  }
  Tensor out({batch, len, total});
  const std::size_t rows = batch * len;
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    const std::size_t width = p->dim(2);
    const double* src = p->raw();
    double* dst = out.raw() + offset;
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(src + r * width, width, dst + r * total);
    offset += width;
  }
  return out;
}

}  // namespace

Tensor concat_features(std::span<const Tensor> parts) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (const Tensor& t : parts) ptrs.push_back(&t);
  return concat_impl(ptrs);
}

Tensor concat_features(std::initializer_list<const Tensor*> parts) {
  return concat_impl(std::span<const Tensor* const>(parts.begin(), parts.size()));
}

std::vector<Tensor> split_features(const Tensor& x, std::span<const std::size_t> widths) {
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  if (x.rank() < 1 || x.cols() != total) {
    throw DimensionError("split_features: widths sum to " + std::to_string(total) + " but tensor is " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  std::vector<Tensor> parts;
  parts.reserve(widths.size());
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    Shape shape = x.shape();
    shape.back() = w;
    Tensor part(std::move(shape));
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.raw() + r * total + offset, w, part.raw() + r * w);
    parts.push_back(std::move(part));
    offset += w;
  }
  return parts;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    for (double g : p.grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParamStore& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be positive");
  for (const auto& [name, p] : params) {
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient in '" + name + "'");
  }
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : params) scale_inplace(p.grad, factor);
  }
  return norm;
}

GradCheckReport grad_check_report(const ScalarFn& f, ParamStore& params, double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");
  auto eval = [&] {
    const double value = f(params);
    if (!std::isfinite(value)) throw NumericError("grad_check: objective is not finite");
    return value;
  };
  GradCheckReport report;
  for (auto& [name, p] : params) {
    GradCheckEntry entry{name};
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double plus = eval();
      p.value[i] = saved - h;
      const double minus = eval();
      p.value[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (rel > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        entry.worst_index = i;
        entry.analytic = analytic;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

double grad_check(const ScalarFn& f, ParamStore& params, double h) {
  return grad_check_report(f, params, h).max_rel_error;
}

}  // namespace inceptive
