#pragma once

#include <string>
#include <vector>

#include "mdsse/optim.hpp"
#include "mdsse/rng.hpp"
#include "mdsse/tensor.hpp"

namespace mdsse {

// Xavier-uniform weights, zero biases.
Tensor xavier_uniform(int64_t fan_in, int64_t fan_out, CounterRng& rng);

// Feed-forward net with tanh hidden activations and a linear output layer.
// Rows of the input are independent samples.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<int64_t>& layer_dims,
      CounterRng& rng);

  Tensor forward(const Tensor& x) const;  // [B, d_in] -> [B, d_out]
  std::vector<NamedTensor> parameters() const;
  int64_t input_dim() const { return dims_.front(); }
  int64_t output_dim() const { return dims_.back(); }
  int64_t param_count() const;

  // Overwrites weights/biases; used by tests to build contrived nets.
  void set_layer(size_t i, const Tensor& w, const Tensor& b);
  size_t layer_count() const { return weights_.size(); }

 private:
  std::string name_;
  std::vector<int64_t> dims_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace mdsse
