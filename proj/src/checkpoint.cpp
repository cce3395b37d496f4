#include "mdsse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mdsse {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params,
                     const nlohmann::ordered_json& hyperparams, int64_t step) {
  nlohmann::ordered_json header;
  header["format"] = "mdsse-ckpt-v1";
  header["step"] = step;
  header["hyperparams"] = hyperparams;
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  int64_t total = 0;
  for (const auto& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.tensor.shape();
    plist.push_back(e);
    total += p.tensor.size();
  }
  header["params"] = plist;
  header["payload_count"] = total;

  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open checkpoint file " + path);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : params) {
    auto v = p.tensor.values();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("failed writing checkpoint " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint file " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen > (1ull << 30)) {
    throw std::runtime_error("corrupt checkpoint header in " + path);
  }
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  nlohmann::ordered_json header = nlohmann::ordered_json::parse(hs);
  if (header.value("format", "") != std::string("mdsse-ckpt-v1")) {
    throw std::runtime_error("unrecognized checkpoint format in " + path);
  }
  LoadedCheckpoint out;
  out.step = header["step"].get<int64_t>();
  out.hyperparams = header["hyperparams"];
  for (const auto& e : header["params"]) {
    Shape shape = e["shape"].get<Shape>();
    int64_t n = numel(shape);
    std::vector<double> vals(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!f) throw std::runtime_error("truncated checkpoint payload in " + path);
    out.params.emplace(e["name"].get<std::string>(),
                       Tensor::from_values(std::move(shape), std::move(vals)));
  }
  return out;
}

void restore_parameters(std::vector<NamedTensor>& params,
                        const LoadedCheckpoint& ckpt) {
  for (auto& p : params) {
    auto it = ckpt.params.find(p.name);
    if (it == ckpt.params.end()) {
      throw std::runtime_error("checkpoint missing parameter '" + p.name + "'");
    }
    if (it->second.shape() != p.tensor.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for '" + p.name +
                               "': " + shape_str(it->second.shape()) + " vs " +
                               shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    auto src = it->second.values();
    std::memcpy(dst.data(), src.data(), src.size() * sizeof(double));
  }
}

}  // namespace mdsse
