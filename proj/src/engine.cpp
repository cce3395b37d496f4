#include "mdsse/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace mdsse {

namespace {

// Inverse softplus: y > 0 -> x with softplus(x) = y.
double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace

MambaBlock::MambaBlock(const std::string& name, int64_t d_model,
                       int64_t n_state, CounterRng& rng)
    : name_(name), d_(d_model), n_(n_state) {
  w_in_ = xavier_uniform(d_, 2 * d_, rng);
  b_in_ = Tensor::zeros({2 * d_}, true);
  w_delta_ = xavier_uniform(d_, d_, rng);
  // Initial delta log-spaced in [1e-3, 1e-1] across channels.
  {
    std::vector<double> b(static_cast<size_t>(d_));
    for (int64_t j = 0; j < d_; ++j) {
      double f = d_ > 1 ? static_cast<double>(j) / static_cast<double>(d_ - 1)
                        : 0.5;
      double dt = std::exp(std::log(1e-3) + f * (std::log(1e-1) - std::log(1e-3)));
      b[static_cast<size_t>(j)] = softplus_inv(dt);
    }
    b_delta_ = Tensor::from_values({d_}, std::move(b), true);
  }
  w_b_ = xavier_uniform(d_, n_, rng);
  w_c_ = xavier_uniform(d_, n_, rng);
  // Realized continuous dynamics start near -(1+n) per state, the usual
  // diagonal-SSM spread.
  {
    std::vector<double> a(static_cast<size_t>(d_ * n_));
    for (int64_t d = 0; d < d_; ++d) {
      for (int64_t n = 0; n < n_; ++n) {
        a[static_cast<size_t>(d * n_ + n)] =
            softplus_inv(static_cast<double>(n + 1));
      }
    }
    a_raw_ = Tensor::from_values({d_, n_}, std::move(a), true);
  }
  d_skip_ = Tensor::full({d_}, 1.0, true);
  w_out_ = Tensor::zeros({d_, d_}, true);
  b_out_ = Tensor::zeros({d_}, true);
}

Tensor MambaBlock::forward(const Tensor& u) const {
  if (u.rank() != 2 || u.dim(1) != d_) {
    throw std::invalid_argument("MambaBlock: expected [L," +
                                std::to_string(d_) + "], got " +
                                shape_str(u.shape()));
  }
  Tensor z = add(matmul(u, w_in_), b_in_);
  Tensor stream = slice(z, 1, 0, d_);
  Tensor gate = slice(z, 1, d_, d_);

  Tensor delta = softplus(add(matmul(stream, w_delta_), b_delta_));
  Tensor bproj = matmul(stream, w_b_);  // [L, n]
  Tensor cproj = matmul(stream, w_c_);  // [L, n]
  Tensor a = realize_dynamics(a_raw_);
  DiscretePair disc = zoh_discretize_seq(a, bproj, delta);
  ScanResult scan =
      selective_scan(stream, disc.abar, disc.bbar, cproj, d_skip_);

  Tensor gated = mul(scan.y, mul(gate, sigmoid(gate)));
  Tensor out = add(matmul(gated, w_out_), b_out_);
  return add(u, out);
}

std::vector<NamedTensor> MambaBlock::parameters() const {
  return {
      {name_ + ".w_in", w_in_},       {name_ + ".b_in", b_in_},
      {name_ + ".w_delta", w_delta_}, {name_ + ".b_delta", b_delta_},
      {name_ + ".w_b", w_b_},         {name_ + ".w_c", w_c_},
      {name_ + ".a_raw", a_raw_},     {name_ + ".d_skip", d_skip_},
      {name_ + ".w_out", w_out_},     {name_ + ".b_out", b_out_},
  };
}

MatrixEngine::MatrixEngine(const EngineConfig& cfg, CounterRng& rng)
    : cfg_(cfg) {
  if (cfg.d_model < 1 || cfg.n_blocks < 1 || cfg.d_lift < 1 || cfg.n_state < 1) {
    throw std::invalid_argument("MatrixEngine: invalid config");
  }
  w_embed_ = xavier_uniform(cfg.d_lift, cfg.d_model, rng);
  b_embed_ = Tensor::zeros({cfg.d_model}, true);
  for (int64_t i = 0; i < cfg.n_blocks; ++i) {
    blocks_.emplace_back("engine.block" + std::to_string(i), cfg.d_model,
                         cfg.n_state, rng);
  }
  w_ha_ = xavier_uniform(cfg.d_model, cfg.d_lift, rng);
  b_ha_ = Tensor::zeros({cfg.d_lift}, true);
  w_hb_ = xavier_uniform(cfg.d_model, cfg.d_lift, rng);
  b_hb_ = Tensor::zeros({cfg.d_lift}, true);
  w_hq_ = xavier_uniform(cfg.d_model, cfg.d_lift, rng);
  // Process noise starts near 0.1.
  b_hq_ = Tensor::full({cfg.d_lift}, softplus_inv(0.1), true);
  delta_raw_ = Tensor::full({cfg.d_lift}, softplus_inv(1.0), true);
}

Tensor MatrixEngine::backbone(const Tensor& lifted) const {
  if (lifted.rank() != 2 || lifted.dim(1) != cfg_.d_lift) {
    throw std::invalid_argument("MatrixEngine: expected [L," +
                                std::to_string(cfg_.d_lift) + "], got " +
                                shape_str(lifted.shape()));
  }
  if (lifted.dim(0) < 1) {
    throw std::invalid_argument("MatrixEngine: empty history");
  }
  Tensor h = add(matmul(lifted, w_embed_), b_embed_);
  for (const auto& blk : blocks_) h = blk.forward(h);
  return h;
}

GeneratedMatrices MatrixEngine::forward(const Tensor& lifted) const {
  Tensor h = backbone(lifted);
  const int64_t L = h.dim(0);

  // a_t <= -1e-4 and per-dim delta >= the floor keep every entry of
  // exp(delta * a_t) strictly inside (0, 1).
  Tensor a_cont = realize_dynamics(add(matmul(h, w_ha_), b_ha_));
  Tensor delta = add_scalar(softplus(delta_raw_), kEngineDeltaFloor);
  GeneratedMatrices out;
  out.a = exp(mul(a_cont, delta));
  out.b = add(matmul(h, w_hb_), b_hb_);
  Tensor q = add_scalar(softplus(add(matmul(h, w_hq_), b_hq_)), kSigmaFloor);
  if (cfg_.freeze_sigma_per_window) {
    // First-step noise reused across the window (still causal).
    out.q = broadcast_to(row(q, 0), {L, cfg_.d_lift});
  } else {
    out.q = q;
  }
  return out;
}

std::vector<NamedTensor> MatrixEngine::backbone_parameters() const {
  std::vector<NamedTensor> out = {{"engine.w_embed", w_embed_},
                                  {"engine.b_embed", b_embed_}};
  for (const auto& blk : blocks_) {
    for (auto& p : blk.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<NamedTensor> MatrixEngine::parameters() const {
  std::vector<NamedTensor> out = backbone_parameters();
  out.push_back({"engine.w_ha", w_ha_});
  out.push_back({"engine.b_ha", b_ha_});
  out.push_back({"engine.w_hb", w_hb_});
  out.push_back({"engine.b_hb", b_hb_});
  out.push_back({"engine.w_hq", w_hq_});
  out.push_back({"engine.b_hq", b_hq_});
  out.push_back({"engine.delta_raw", delta_raw_});
  return out;
}

}  // namespace mdsse
