#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "vgidm/autodiff.hpp"

namespace vgidm {

// Checkpoint format, version 1:
//
//   {"format": "vgidm-tensors", "version": 1,
//    "tensors": [{"name": "...", "shape": [r, c], "data": [...]}, ...]}
//
// Tensors appear in lexicographic name order, data is row-major, and doubles
// are written with round-trip precision.

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, p] : params) {
    tensors.push_back({{"name", name}, {"shape", p.value.shape()}, {"data", p.value.values()}});
  }
  return {{"format", "vgidm-tensors"}, {"version", kCheckpointVersion}, {"tensors", std::move(tensors)}};
}

inline ParamSet params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "vgidm-tensors") throw CheckpointError("checkpoint: not a vgidm-tensors document");
  if (j.value("version", 0) != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
  }
  ParamSet out;
  for (const auto& t : j.at("tensors")) {
    auto shape = t.at("shape").get<Tensor::Shape>();
    auto data = t.at("data").get<std::vector<double>>();
    const auto name = t.at("name").get<std::string>();
    try {
      out.add(name, Tensor(std::move(shape), std::move(data)));
    } catch (const ShapeError& e) {
      throw CheckpointError("checkpoint: tensor '" + name + "': " + e.what());
    }
  }
  return out;
}

inline void save_params(const ParamSet& params, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot write " + path.string());
  os << params_to_json(params).dump(1) << '\n';
}

inline ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot read " + path.string());
  try {
    return params_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace vgidm
