#include "mdsse/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mdsse {

Tensor xavier_uniform(int64_t fan_in, int64_t fan_out, CounterRng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(static_cast<size_t>(fan_in * fan_out));
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from_values({fan_in, fan_out}, std::move(w), true);
}

Mlp::Mlp(const std::string& name, const std::vector<int64_t>& layer_dims,
         CounterRng& rng)
    : name_(name), dims_(layer_dims) {
  if (layer_dims.size() < 2) {
    throw std::invalid_argument("Mlp '" + name + "' needs >= 2 layer dims");
  }
  for (size_t i = 0; i + 1 < layer_dims.size(); ++i) {
    weights_.push_back(xavier_uniform(layer_dims[i], layer_dims[i + 1], rng));
    biases_.push_back(Tensor::zeros({layer_dims[i + 1]}, true));
  }
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != dims_.front()) {
    throw std::invalid_argument("Mlp '" + name_ + "' expects [B," +
                                std::to_string(dims_.front()) + "], got " +
                                shape_str(x.shape()));
  }
  Tensor h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    h = add(matmul(h, weights_[i]), biases_[i]);
    if (i + 1 < weights_.size()) h = tanh(h);
  }
  return h;
}

std::vector<NamedTensor> Mlp::parameters() const {
  std::vector<NamedTensor> out;
  for (size_t i = 0; i < weights_.size(); ++i) {
    out.push_back({name_ + ".w" + std::to_string(i), weights_[i]});
    out.push_back({name_ + ".b" + std::to_string(i), biases_[i]});
  }
  return out;
}

int64_t Mlp::param_count() const {
  int64_t n = 0;
  for (size_t i = 0; i < weights_.size(); ++i) {
    n += weights_[i].size() + biases_[i].size();
  }
  return n;
}

void Mlp::set_layer(size_t i, const Tensor& w, const Tensor& b) {
  if (i >= weights_.size()) throw std::invalid_argument("Mlp layer out of range");
  if (w.shape() != weights_[i].shape() || b.shape() != biases_[i].shape()) {
    throw std::invalid_argument("Mlp set_layer shape mismatch");
  }
  weights_[i] = w;
  biases_[i] = b;
}

}  // namespace mdsse
