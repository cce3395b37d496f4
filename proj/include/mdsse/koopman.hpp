#pragma once

#include <cstdint>

#include "mdsse/nn.hpp"
#include "mdsse/tensor.hpp"

namespace mdsse {

struct LiftConfig {
  int64_t d_in = 0;       // states + measurements + both masks
  double rho = 1.5;       // expansion factor in [1.5, 2.0]
  int64_t d_lift = 0;     // ceil(rho * d_in) unless overridden
  int64_t hidden = 128;   // encoder/decoder hidden width
};

// d_lift derived from the expansion factor; rho outside [1.5, 2.0] is
// rejected (pass an explicit d_lift for off-spec test configs).
LiftConfig make_lift_config(int64_t d_in, double rho, int64_t hidden);

// Encoder psi: masked inputs -> lifted vector; 2 tanh hidden layers.
class LiftEncoder {
 public:
  LiftEncoder() = default;
  LiftEncoder(const LiftConfig& cfg, CounterRng& rng);

  // Frames are rows: [L, d_in] -> [L, d_lift].
  Tensor forward(const Tensor& frames) const;

  // Single-frame form taking the masked parts separately; concatenates
  // [x; m; mask_x; mask_m] and lifts.
  Tensor lift(const Tensor& x, const Tensor& m, const Tensor& mask_x,
              const Tensor& mask_m) const;

  std::vector<NamedTensor> parameters() const { return mlp_.parameters(); }
  const LiftConfig& config() const { return cfg_; }
  Mlp& mlp() { return mlp_; }

 private:
  LiftConfig cfg_;
  Mlp mlp_;
};

// Decoder: [mean; diagonal variance] (2*d_lift) -> full state (2*n_buses).
class StateDecoder {
 public:
  StateDecoder() = default;
  StateDecoder(int64_t d_lift, int64_t hidden, int64_t n_buses,
               CounterRng& rng);

  // reconstruct from a posterior; variance entries must be >= 0.
  Tensor reconstruct(const Tensor& mean, const Tensor& var) const;

  // Batched: rows are [mean; var] pairs, [K, 2*d_lift] -> [K, 2*n_buses].
  Tensor forward_rows(const Tensor& rows) const;

  std::vector<NamedTensor> parameters() const { return mlp_.parameters(); }
  int64_t n_buses() const { return n_buses_; }
  Mlp& mlp() { return mlp_; }

 private:
  int64_t d_lift_ = 0;
  int64_t n_buses_ = 0;
  Mlp mlp_;
};

struct KoopmanLossTerms {
  Tensor prediction;      // MSE of one-step predictions vs next true states
  Tensor reconstruction;  // MSE of zero-variance decoded lifts vs true states
  Tensor total;
};

// total = lambda_pred * MSE(pred_next, true_next)
//       + lambda_rec * MSE(rec, rec_target); all terms in state space.
KoopmanLossTerms koopman_loss(const Tensor& pred_next, const Tensor& true_next,
                              const Tensor& rec, const Tensor& rec_target,
                              double lambda_pred, double lambda_rec);

}  // namespace mdsse
