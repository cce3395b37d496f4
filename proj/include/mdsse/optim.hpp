#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdsse/tensor.hpp"

namespace mdsse {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay. The decay shrink
// p <- p - lr*wd*p happens before the moment update.
struct AdamState {
  AdamConfig cfg;
  int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<Tensor>& params);
};

void adam_step(AdamState& state, std::vector<Tensor>& params);

// Variant with a per-call learning rate (for schedules); cfg.lr is ignored.
void adam_step(AdamState& state, std::vector<Tensor>& params, double lr);

}  // namespace mdsse
