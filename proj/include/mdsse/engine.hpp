#pragma once

#include <cstdint>
#include <vector>

#include "mdsse/nn.hpp"
#include "mdsse/ssm.hpp"
#include "mdsse/tensor.hpp"

namespace mdsse {

struct EngineConfig {
  int64_t n_blocks = 2;
  int64_t d_model = 256;
  int64_t n_state = 16;   // hidden size per channel
  int64_t d_lift = 0;     // head output dimension
  bool freeze_sigma_per_window = false;  // reuse step-1 process noise
};

// Selective block: in-projection to stream+gate, scan with input-dependent
// B/C/delta, SiLU gate, out-projection (zero-initialized), residual add.
class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(const std::string& name, int64_t d_model, int64_t n_state,
             CounterRng& rng);

  Tensor forward(const Tensor& u) const;  // [L, d_model] -> [L, d_model]
  std::vector<NamedTensor> parameters() const;

 private:
  std::string name_;
  int64_t d_ = 0, n_ = 0;
  Tensor w_in_, b_in_;        // [d, 2d], [2d]
  Tensor w_delta_, b_delta_;  // [d, d], [d]
  Tensor w_b_, w_c_;          // [d, n]
  Tensor a_raw_;              // [d, n] continuous dynamics, pre-softplus
  Tensor d_skip_;             // [d]
  Tensor w_out_, b_out_;      // [d, d] zeros, [d] zeros
};

// Per-timestep diagonals for the lifted-space estimator.
struct GeneratedMatrices {
  Tensor a;  // [L, d_lift], entries in (0,1)
  Tensor b;  // [L, d_lift], unconstrained
  Tensor q;  // [L, d_lift], entries > 0
};

class MatrixEngine {
 public:
  MatrixEngine() = default;
  MatrixEngine(const EngineConfig& cfg, CounterRng& rng);

  // Causal: matrices at step t depend only on lifted history at steps <= t.
  GeneratedMatrices forward(const Tensor& lifted) const;  // [L, d_lift]

  // Backbone only: embed + block stack, [L, d_lift] -> [L, d_model].
  Tensor backbone(const Tensor& lifted) const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> backbone_parameters() const;
  const EngineConfig& config() const { return cfg_; }

 private:
  EngineConfig cfg_;
  Tensor w_embed_, b_embed_;  // d_lift -> d_model
  std::vector<MambaBlock> blocks_;
  Tensor w_ha_, b_ha_;  // heads: d_model -> d_lift
  Tensor w_hb_, b_hb_;
  Tensor w_hq_, b_hq_;
  Tensor delta_raw_;    // [d_lift] per-dim step scale for the A realization
};

// Floor added to softplus(delta_raw); with the Hurwitz margin 1e-4 this
// bounds every generated A entry by exp(-2e-6) < 1 - 1e-6.
constexpr double kEngineDeltaFloor = 0.02;
constexpr double kSigmaFloor = 1e-6;

}  // namespace mdsse
