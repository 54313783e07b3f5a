#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sketchlab/nn.hpp"
#include "sketchlab/optim.hpp"

namespace sketchlab {

// Self-describing model container: a fixed magic and version, a JSON metadata
// header (hyperparameters, seed, progress counters, rng states), then named
// tensors stored as little-endian float32 payloads.  Values live as doubles
// in memory; storage rounds through float32, and quantize helpers let the
// writer apply the same rounding to its live state so that continuing a run
// and resuming it from disk follow the same trajectory.

struct CheckpointData {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(const std::string& name, Tensor t) {
    tensors.emplace_back(name, std::move(t));
  }
  const Tensor* find(const std::string& name) const {
    for (auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

// Round every element through float32.
void quantize_to_f32(Tensor& t);

// Dump / restore a parameter store (trainables and buffers) under a name
// prefix.  Loading verifies shapes and copies values in place.
void add_store(CheckpointData& data, const std::string& prefix,
               const ParamStore& store);
void load_store(const CheckpointData& data, const std::string& prefix,
                ParamStore& store);
void quantize_store(ParamStore& store);

// Optimizer state: step counter in meta[prefix], moments as tensors.
void add_adam(CheckpointData& data, const std::string& prefix,
              const Adam& opt);
void load_adam(const CheckpointData& data, const std::string& prefix,
               Adam& opt);
void quantize_adam(Adam& opt);

}  // namespace sketchlab
