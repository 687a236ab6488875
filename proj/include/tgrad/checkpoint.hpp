#pragma once

// Optimizer config <-> JSON, and on-disk checkpoints of the compressed state:
// manifest.json (config, counters, index set) plus one TGRD file per factor
// and per moment tensor.

#include <filesystem>

#include "json.hpp"
#include "tgrad/optim.hpp"

namespace tgrad {

nlohmann::json config_to_json(const OptimizerConfig& cfg);

/// Overlays keys present in j onto base. Unknown keys are a validation error.
OptimizerConfig config_from_json(const nlohmann::json& j, OptimizerConfig base = {});

template <TensorScalar T>
void save_checkpoint(const std::filesystem::path& dir, const TensorGradState<T>& state, const OptimizerConfig& cfg);

template <TensorScalar T> struct Checkpoint {
    TensorGradState<T> state;
    OptimizerConfig config;
};

template <TensorScalar T> Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

}  // namespace tgrad
