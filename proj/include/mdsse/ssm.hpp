#pragma once

#include <cstdint>
#include <vector>

#include "mdsse/tensor.hpp"

namespace mdsse {

// Continuous diagonal dynamics with a strict Hurwitz margin:
// A_ii = -softplus(a_raw_ii) - 1e-4. Differentiable everywhere.
Tensor realize_dynamics(const Tensor& a_raw);

constexpr double kHurwitzMargin = 1e-4;

struct DiscretePair {
  Tensor abar;  // exp(delta * a), entries in (0,1) for a < 0, delta > 0
  Tensor bbar;  // phi(delta * a) * delta * b, phi(x) = (exp(x)-1)/x
};

// Elementwise zero-order-hold discretization; a, b, delta share one shape
// (or broadcast per tensor rules). Throws if any delta <= 0.
DiscretePair zoh_discretize(const Tensor& a, const Tensor& b,
                            const Tensor& delta);

// Sequence form used by the selective blocks: a is [D,N] per-channel
// dynamics, b is [L,N] shared input projections, delta is [L,D] per-channel
// timescales. Outputs are [L,D,N].
DiscretePair zoh_discretize_seq(const Tensor& a, const Tensor& b,
                                const Tensor& delta);

// phi(x) = (exp(x)-1)/x with a degree-4 Taylor branch for |x| < 1e-5;
// elementwise, differentiable.
Tensor expm1_over_x(const Tensor& x);

struct ScanResult {
  Tensor y;            // [L,D], on the tape
  Tensor final_state;  // [D,N], detached diagnostic value
};

// Exact sequential recurrence h_t = abar_t*h_{t-1} + bbar_t*u_t per channel
// and state, with y_t[d] = sum_n c_t[.,n] h_t[d,n] + d_skip[d] u_t[d].
// `c` is [L,N] (shared across channels) or [L,D,N]. x0 defaults to zeros.
ScanResult selective_scan(const Tensor& u, const Tensor& abar,
                          const Tensor& bbar, const Tensor& c,
                          const Tensor& d_skip, const Tensor& x0 = {});

// Time-invariant convolution dual. Plain numeric path (no tape): used for
// the scan/convolution equivalence checks and benchmarking.
// kernel[d*L + j] = sum_n c[.,n] abar[d,n]^j bbar[d,n].
std::vector<double> kernel_materialize(const std::vector<double>& abar,
                                       const std::vector<double>& bbar,
                                       const std::vector<double>& c,
                                       int64_t channels, int64_t states,
                                       bool c_shared, int64_t taps);

// Causal convolution y[t,d] = sum_{j<=t} kernel[d,j] u[t-j,d].
std::vector<double> conv_apply(const std::vector<double>& kernel,
                               const std::vector<double>& u, int64_t length,
                               int64_t channels, int64_t taps);

}  // namespace mdsse
