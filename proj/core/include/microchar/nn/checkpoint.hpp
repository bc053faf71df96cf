#pragma once

#include <string>
#include <vector>

#include <microchar/nn/tensor.hpp>

namespace microchar::nn {

// Checkpoint container: "MCCK" magic, u32 version, u64 JSON length, the arch
// descriptor JSON, then per-parameter little-endian float32 blobs in layer
// order. Training metadata goes to a sidecar "<path>.meta.json".

struct Checkpoint {
    std::string arch_json;
    std::vector<std::vector<float>> blobs;
};

void save_checkpoint(const std::string& path, const std::string& arch_json,
                     const std::vector<ParamRef<float>>& params);

Checkpoint load_checkpoint(const std::string& path);

/// Copies loaded blobs into the network parameters; sizes must match exactly.
void restore_params(const Checkpoint& ckpt, const std::vector<ParamRef<float>>& params);

void write_sidecar(const std::string& ckpt_path, const std::string& meta_json);

} // namespace microchar::nn
