#include "mdsse/ssm.hpp"

#include <cmath>
#include <stdexcept>

namespace mdsse {

namespace {

// (exp(x)-1)/x; removable singularity handled by a degree-4 Taylor series.
double phi(double x) {
  if (std::abs(x) < 1e-5) {
    return 1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0 +
           x * x * x * x / 120.0;
  }
  return std::expm1(x) / x;
}

// phi'(x) = (exp(x)(x-1)+1)/x^2; series branch widened to |x| < 1e-3 to
// dodge the cancellation in the closed form.
double dphi(double x) {
  if (std::abs(x) < 1e-3) {
    return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0 +
           x * x * x * x / 144.0;
  }
  return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
}

void check_delta_positive(const Tensor& delta) {
  for (double d : delta.values()) {
    if (!(d > 0.0)) {
      throw std::invalid_argument("zoh_discretize: delta must be > 0, got " +
                                  std::to_string(d));
    }
  }
}

void check_a_negative(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v < 0.0)) {
      throw std::invalid_argument(
          "zoh_discretize: diagonal dynamics must be < 0, got " +
          std::to_string(v));
    }
  }
}

}  // namespace

Tensor realize_dynamics(const Tensor& a_raw) {
  return sub(neg(softplus(a_raw)), Tensor::scalar(kHurwitzMargin));
}

Tensor expm1_over_x(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = phi(xv[i]);
  return make_op("expm1_over_x", x.shape(), std::move(out), {x},
                 [](TensorNode& self) {
                   auto& xi = *self.inputs[0];
                   if (!xi.requires_grad) return;
                   for (size_t i = 0; i < self.values.size(); ++i) {
                     xi.grad[i] += self.grad[i] * dphi(xi.values[i]);
                   }
                 });
}

DiscretePair zoh_discretize(const Tensor& a, const Tensor& b,
                            const Tensor& delta) {
  check_delta_positive(delta);
  check_a_negative(a);
  Tensor x = mul(delta, a);
  DiscretePair out;
  out.abar = exp(x);
  out.bbar = mul(mul(expm1_over_x(x), delta), b);
  return out;
}

DiscretePair zoh_discretize_seq(const Tensor& a, const Tensor& b,
                                const Tensor& delta) {
  if (a.rank() != 2 || b.rank() != 2 || delta.rank() != 2 ||
      a.dim(1) != b.dim(1) || delta.dim(0) != b.dim(0) ||
      delta.dim(1) != a.dim(0)) {
    throw std::invalid_argument(
        "zoh_discretize_seq: want a [D,N], b [L,N], delta [L,D]; got " +
        shape_str(a.shape()) + ", " + shape_str(b.shape()) + ", " +
        shape_str(delta.shape()));
  }
  check_delta_positive(delta);
  check_a_negative(a);
  const int64_t D = a.dim(0), N = a.dim(1), L = delta.dim(0);
  const auto av = a.values();
  const auto bv = b.values();
  const auto dv = delta.values();
  std::vector<double> abar(static_cast<size_t>(L * D * N));
  std::vector<double> bbar(static_cast<size_t>(L * D * N));
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t d = 0; d < D; ++d) {
      double dt = dv[static_cast<size_t>(t * D + d)];
      for (int64_t n = 0; n < N; ++n) {
        double x = dt * av[static_cast<size_t>(d * N + n)];
        size_t idx = static_cast<size_t>((t * D + d) * N + n);
        abar[idx] = std::exp(x);
        bbar[idx] = phi(x) * dt * bv[static_cast<size_t>(t * N + n)];
      }
    }
  }

  auto backward = [L, D, N](TensorNode& self, bool is_bbar) {
    auto& ai = *self.inputs[0];
    auto& bi = *self.inputs[1];
    auto& di = *self.inputs[2];
    for (int64_t t = 0; t < L; ++t) {
      for (int64_t d = 0; d < D; ++d) {
        double dt = di.values[static_cast<size_t>(t * D + d)];
        for (int64_t n = 0; n < N; ++n) {
          size_t idx = static_cast<size_t>((t * D + d) * N + n);
          double g = self.grad[idx];
          if (g == 0.0) continue;
          double a = ai.values[static_cast<size_t>(d * N + n)];
          double x = dt * a;
          if (!is_bbar) {
            double e = self.values[idx];  // exp(x)
            if (ai.requires_grad)
              ai.grad[static_cast<size_t>(d * N + n)] += g * e * dt;
            if (di.requires_grad)
              di.grad[static_cast<size_t>(t * D + d)] += g * e * a;
          } else {
            double b = bi.values[static_cast<size_t>(t * N + n)];
            double ph = phi(x), dp = dphi(x);
            if (ai.requires_grad)
              ai.grad[static_cast<size_t>(d * N + n)] += g * dp * dt * dt * b;
            if (bi.requires_grad)
              bi.grad[static_cast<size_t>(t * N + n)] += g * ph * dt;
            if (di.requires_grad)
              di.grad[static_cast<size_t>(t * D + d)] +=
                  g * (dp * a * dt + ph) * b;
          }
        }
      }
    }
  };

  DiscretePair out;
  out.abar = make_op("zoh_seq_abar", {L, D, N}, std::move(abar),
                     {a, b, delta},
                     [backward](TensorNode& self) { backward(self, false); });
  out.bbar = make_op("zoh_seq_bbar", {L, D, N}, std::move(bbar),
                     {a, b, delta},
                     [backward](TensorNode& self) { backward(self, true); });
  return out;
}

ScanResult selective_scan(const Tensor& u, const Tensor& abar,
                          const Tensor& bbar, const Tensor& c,
                          const Tensor& d_skip, const Tensor& x0_in) {
  if (u.rank() != 2) {
    throw std::invalid_argument("selective_scan: u must be [L,D], got " +
                                shape_str(u.shape()));
  }
  const int64_t L = u.dim(0), D = u.dim(1);
  if (abar.rank() != 3 || abar.dim(0) != L || abar.dim(1) != D) {
    throw std::invalid_argument(
        "selective_scan: abar must be [L,D,N] matching u " +
        shape_str(u.shape()) + ", got " + shape_str(abar.shape()));
  }
  const int64_t N = abar.dim(2);
  if (bbar.shape() != abar.shape()) {
    throw std::invalid_argument("selective_scan: bbar shape " +
                                shape_str(bbar.shape()) + " != abar shape " +
                                shape_str(abar.shape()));
  }
  bool c_shared;
  if (c.rank() == 2 && c.dim(0) == L && c.dim(1) == N) {
    c_shared = true;
  } else if (c.rank() == 3 && c.shape() == abar.shape()) {
    c_shared = false;
  } else {
    throw std::invalid_argument("selective_scan: c must be [L,N] or [L,D,N], got " +
                                shape_str(c.shape()));
  }
  if (d_skip.size() != D) {
    throw std::invalid_argument("selective_scan: d_skip must have D entries");
  }
  Tensor x0 = x0_in.defined() ? x0_in : Tensor::zeros({D, N});
  if (x0.rank() != 2 || x0.dim(0) != D || x0.dim(1) != N) {
    throw std::invalid_argument("selective_scan: x0 must be [D,N]");
  }

  const auto uv = u.values();
  const auto av = abar.values();
  const auto bv = bbar.values();
  const auto cv = c.values();
  const auto sv = d_skip.values();

  // Hidden states for all steps are kept for the backward pass; h index
  // [t,d,n] with t in [0..L], t=0 holding x0.
  auto hist = std::make_shared<std::vector<double>>(
      static_cast<size_t>((L + 1) * D * N));
  {
    auto x0v = x0.values();
    std::copy(x0v.begin(), x0v.end(), hist->begin());
  }
  std::vector<double> y(static_cast<size_t>(L * D), 0.0);
  for (int64_t t = 0; t < L; ++t) {
    const double* hprev = &(*hist)[static_cast<size_t>(t * D * N)];
    double* hcur = &(*hist)[static_cast<size_t>((t + 1) * D * N)];
    for (int64_t d = 0; d < D; ++d) {
      double ut = uv[static_cast<size_t>(t * D + d)];
      double acc = 0.0;
      const double* arow = &av[static_cast<size_t>((t * D + d) * N)];
      const double* brow = &bv[static_cast<size_t>((t * D + d) * N)];
      const double* crow = c_shared ? &cv[static_cast<size_t>(t * N)]
                                    : &cv[static_cast<size_t>((t * D + d) * N)];
      for (int64_t n = 0; n < N; ++n) {
        double h = arow[n] * hprev[d * N + n] + brow[n] * ut;
        hcur[d * N + n] = h;
        acc += crow[n] * h;
      }
      y[static_cast<size_t>(t * D + d)] = acc + sv[static_cast<size_t>(d)] * ut;
    }
  }

  ScanResult res;
  res.final_state = Tensor::from_values(
      {D, N},
      std::vector<double>(hist->end() - static_cast<ptrdiff_t>(D * N),
                          hist->end()));

  res.y = make_op(
      "selective_scan", {L, D}, std::move(y), {u, abar, bbar, c, d_skip, x0},
      [L, D, N, c_shared, hist](TensorNode& self) {
        auto& ui = *self.inputs[0];
        auto& ai = *self.inputs[1];
        auto& bi = *self.inputs[2];
        auto& ci = *self.inputs[3];
        auto& si = *self.inputs[4];
        auto& xi = *self.inputs[5];
        // Adjoint of the hidden state, one [D,N] slab swept backwards.
        std::vector<double> gh(static_cast<size_t>(D * N), 0.0);
        for (int64_t t = L - 1; t >= 0; --t) {
          const double* hprev = &(*hist)[static_cast<size_t>(t * D * N)];
          const double* hcur = &(*hist)[static_cast<size_t>((t + 1) * D * N)];
          for (int64_t d = 0; d < D; ++d) {
            double gy = self.grad[static_cast<size_t>(t * D + d)];
            double ut = ui.values[static_cast<size_t>(t * D + d)];
            const double* arow = &ai.values[static_cast<size_t>((t * D + d) * N)];
            const double* brow = &bi.values[static_cast<size_t>((t * D + d) * N)];
            const double* crow =
                c_shared ? &ci.values[static_cast<size_t>(t * N)]
                         : &ci.values[static_cast<size_t>((t * D + d) * N)];
            if (si.requires_grad) si.grad[static_cast<size_t>(d)] += gy * ut;
            double gu = gy * si.values[static_cast<size_t>(d)];
            for (int64_t n = 0; n < N; ++n) {
              size_t hidx = static_cast<size_t>(d * N + n);
              double g = gh[hidx] + gy * crow[n];
              if (ci.requires_grad) {
                size_t cidx = c_shared
                                  ? static_cast<size_t>(t * N + n)
                                  : static_cast<size_t>((t * D + d) * N + n);
                ci.grad[cidx] += gy * hcur[hidx];
              }
              if (ai.requires_grad)
                ai.grad[static_cast<size_t>((t * D + d) * N + n)] +=
                    g * hprev[hidx];
              if (bi.requires_grad)
                bi.grad[static_cast<size_t>((t * D + d) * N + n)] += g * ut;
              gu += g * brow[n];
              gh[hidx] = g * arow[n];
            }
            if (ui.requires_grad)
              ui.grad[static_cast<size_t>(t * D + d)] += gu;
          }
        }
        if (xi.requires_grad) {
          for (int64_t i = 0; i < D * N; ++i)
            xi.grad[static_cast<size_t>(i)] += gh[static_cast<size_t>(i)];
        }
      });
  return res;
}

std::vector<double> kernel_materialize(const std::vector<double>& abar,
                                       const std::vector<double>& bbar,
                                       const std::vector<double>& c,
                                       int64_t channels, int64_t states,
                                       bool c_shared, int64_t taps) {
  if (taps < 1) throw std::invalid_argument("kernel_materialize: taps must be >= 1");
  if (abar.size() != static_cast<size_t>(channels * states) ||
      bbar.size() != abar.size()) {
    throw std::invalid_argument("kernel_materialize: abar/bbar must be [D,N]");
  }
  size_t cexp = static_cast<size_t>(c_shared ? states : channels * states);
  if (c.size() != cexp) {
    throw std::invalid_argument("kernel_materialize: c size mismatch");
  }
  std::vector<double> kernel(static_cast<size_t>(channels * taps), 0.0);
  std::vector<double> pw(static_cast<size_t>(states));
  for (int64_t d = 0; d < channels; ++d) {
    const double* ar = &abar[static_cast<size_t>(d * states)];
    const double* br = &bbar[static_cast<size_t>(d * states)];
    const double* cr = c_shared ? c.data() : &c[static_cast<size_t>(d * states)];
    for (int64_t n = 0; n < states; ++n) pw[static_cast<size_t>(n)] = br[n];
    for (int64_t j = 0; j < taps; ++j) {
      double acc = 0.0;
      for (int64_t n = 0; n < states; ++n) {
        acc += cr[n] * pw[static_cast<size_t>(n)];
      }
      kernel[static_cast<size_t>(d * taps + j)] = acc;
      for (int64_t n = 0; n < states; ++n) pw[static_cast<size_t>(n)] *= ar[n];
    }
  }
  return kernel;
}

std::vector<double> conv_apply(const std::vector<double>& kernel,
                               const std::vector<double>& u, int64_t length,
                               int64_t channels, int64_t taps) {
  if (taps > length) {
    throw std::invalid_argument("conv_apply: kernel longer than sequence");
  }
  if (kernel.size() != static_cast<size_t>(channels * taps) ||
      u.size() != static_cast<size_t>(length * channels)) {
    throw std::invalid_argument("conv_apply: shape mismatch");
  }
  std::vector<double> y(static_cast<size_t>(length * channels), 0.0);
  for (int64_t t = 0; t < length; ++t) {
    for (int64_t d = 0; d < channels; ++d) {
      double acc = 0.0;
      int64_t jmax = std::min<int64_t>(taps - 1, t);
      for (int64_t j = 0; j <= jmax; ++j) {
        acc += kernel[static_cast<size_t>(d * taps + j)] *
               u[static_cast<size_t>((t - j) * channels + d)];
      }
      y[static_cast<size_t>(t * channels + d)] = acc;
    }
  }
  return y;
}

}  // namespace mdsse
