#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mvs/tensor.h"

namespace mvs {

/// All learnable tensors, keyed by name. std::map keeps the serialization
/// order deterministic (lexicographic).
using ParamMap = std::map<std::string, Tensor>;

/// He-style uniform init: values in ±sqrt(6 / fan_in).
Tensor he_uniform(const Shape& shape, size_t fan_in, std::mt19937_64& rng);

/// Checkpoint: magic, version, then (name, shape, fp64 little-endian payload)
/// per entry. load(save(p)) is bit-identical.
void save_params(const std::filesystem::path& path, const ParamMap& params);
ParamMap load_params(const std::filesystem::path& path);

}  // namespace mvs
