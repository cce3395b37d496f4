#include "mdsse/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mdsse {

void AdamState::init(const std::vector<Tensor>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(static_cast<size_t>(p.size()), 0.0);
    v.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void adam_step(AdamState& state, std::vector<Tensor>& params) {
  adam_step(state, params, state.cfg.lr);
}

void adam_step(AdamState& state, std::vector<Tensor>& params, double lr) {
  if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state/parameter count mismatch");
  }
  state.step += 1;
  const auto& c = state.cfg;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].mutable_values();
    auto g = params[pi].grad();
    auto& mm = state.m[pi];
    auto& vv = state.v[pi];
    if (mm.size() != vals.size() || g.size() != vals.size()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " +
                                  std::to_string(pi));
    }
    for (size_t i = 0; i < vals.size(); ++i) {
      vals[i] -= lr * c.weight_decay * vals[i];
      mm[i] = c.beta1 * mm[i] + (1.0 - c.beta1) * g[i];
      vv[i] = c.beta2 * vv[i] + (1.0 - c.beta2) * g[i] * g[i];
      double mhat = mm[i] / bc1;
      double vhat = vv[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace mdsse
