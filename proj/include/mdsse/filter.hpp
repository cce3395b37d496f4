#pragma once

#include <vector>

#include "mdsse/tensor.hpp"

namespace mdsse {

// Diagonal Gaussian belief in the lifted space.
struct GaussianBelief {
  Tensor mean;  // [d]
  Tensor var;   // [d], entries >= 0
};

// Process step: mean' = a*mean + b*x, var' = a^2*var + q (all elementwise).
GaussianBelief predict(const GaussianBelief& belief, const Tensor& a,
                       const Tensor& b, const Tensor& q, const Tensor& x);

// Measurement step with identity observation model in the lifted space:
// k = var/(var+r); mean' = mean + k*(x-mean); var' = (1-k)*var.
GaussianBelief update(const GaussianBelief& prior, const Tensor& x,
                      const Tensor& r);

struct FilterResult {
  std::vector<GaussianBelief> priors;      // after predict, per step
  std::vector<GaussianBelief> posteriors;  // after update, per step
};

// Alternates predict/update over the window. xs/a/b/q are [L,d]; r is [d].
// belief0 defaults to mean 0, var 1. update_mask, when given, skips the
// update at steps whose flag is false (the prior is carried through).
FilterResult filter_sequence(const Tensor& xs, const Tensor& a,
                             const Tensor& b, const Tensor& q, const Tensor& r,
                             const GaussianBelief& belief0 = {},
                             const std::vector<bool>& update_mask = {});

}  // namespace mdsse
