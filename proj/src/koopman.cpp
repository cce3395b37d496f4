#include "mdsse/koopman.hpp"

#include <cmath>
#include <stdexcept>

namespace mdsse {

LiftConfig make_lift_config(int64_t d_in, double rho, int64_t hidden) {
  if (d_in < 1) throw std::invalid_argument("make_lift_config: d_in must be >= 1");
  if (rho < 1.5 || rho > 2.0) {
    throw std::invalid_argument("make_lift_config: expansion factor must be in [1.5, 2.0]");
  }
  LiftConfig cfg;
  cfg.d_in = d_in;
  cfg.rho = rho;
  cfg.d_lift = static_cast<int64_t>(std::ceil(rho * static_cast<double>(d_in)));
  cfg.hidden = hidden;
  return cfg;
}

LiftEncoder::LiftEncoder(const LiftConfig& cfg, CounterRng& rng) : cfg_(cfg) {
  if (cfg.d_in < 1 || cfg.d_lift < 1 || cfg.hidden < 1) {
    throw std::invalid_argument("LiftEncoder: invalid config");
  }
  mlp_ = Mlp("encoder", {cfg.d_in, cfg.hidden, cfg.hidden, cfg.d_lift}, rng);
}

Tensor LiftEncoder::forward(const Tensor& frames) const {
  return mlp_.forward(frames);
}

Tensor LiftEncoder::lift(const Tensor& x, const Tensor& m, const Tensor& mask_x,
                         const Tensor& mask_m) const {
  Tensor in = concat({x, m, mask_x, mask_m}, 0);
  if (in.size() != cfg_.d_in) {
    throw std::invalid_argument("lift: assembled input has " +
                                std::to_string(in.size()) +
                                " entries, config expects " +
                                std::to_string(cfg_.d_in));
  }
  return reshape(forward(reshape(in, {1, cfg_.d_in})), {cfg_.d_lift});
}

StateDecoder::StateDecoder(int64_t d_lift, int64_t hidden, int64_t n_buses,
                           CounterRng& rng)
    : d_lift_(d_lift), n_buses_(n_buses) {
  mlp_ = Mlp("decoder", {2 * d_lift, hidden, hidden, 2 * n_buses}, rng);
}

Tensor StateDecoder::reconstruct(const Tensor& mean, const Tensor& var) const {
  if (mean.size() != d_lift_ || var.size() != d_lift_) {
    throw std::invalid_argument("reconstruct: mean/var must have d_lift entries");
  }
  for (double v : var.values()) {
    if (v < 0.0) {
      throw std::invalid_argument("reconstruct: negative variance entry " +
                                  std::to_string(v));
    }
  }
  Tensor in = concat({reshape(mean, {1, d_lift_}), reshape(var, {1, d_lift_})}, 1);
  return reshape(mlp_.forward(in), {2 * n_buses_});
}

Tensor StateDecoder::forward_rows(const Tensor& rows) const {
  return mlp_.forward(rows);
}

KoopmanLossTerms koopman_loss(const Tensor& pred_next, const Tensor& true_next,
                              const Tensor& rec, const Tensor& rec_target,
                              double lambda_pred, double lambda_rec) {
  KoopmanLossTerms out;
  out.prediction = mse(pred_next, true_next);
  out.reconstruction = mse(rec, rec_target);
  out.total = add(mul_scalar(out.prediction, lambda_pred),
                  mul_scalar(out.reconstruction, lambda_rec));
  return out;
}

}  // namespace mdsse
