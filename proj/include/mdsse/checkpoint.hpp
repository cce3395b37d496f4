#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdsse/optim.hpp"
#include "mdsse/tensor.hpp"

namespace mdsse {

// Single-file checkpoint: u64 little-endian JSON header length, the JSON
// header (names, shapes, hyperparameters, step counter), then all parameter
// values as little-endian 64-bit floats in header order.
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params,
                     const nlohmann::ordered_json& hyperparams, int64_t step);

struct LoadedCheckpoint {
  nlohmann::ordered_json hyperparams;
  int64_t step = 0;
  std::map<std::string, Tensor> params;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies loaded values into matching model parameters; throws on any
// missing name or shape mismatch.
void restore_parameters(std::vector<NamedTensor>& params,
                        const LoadedCheckpoint& ckpt);

}  // namespace mdsse
