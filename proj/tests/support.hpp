#pragma once

#include <cstdint>

#include "inceptive/rng.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Sum of w[i] * x[i] with fixed pseudo-random weights: a scalar probe whose
// gradient w.r.t. x is w.
inline double probe(const Tensor& x, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
  return s;
}

}  // namespace inceptive::testing
