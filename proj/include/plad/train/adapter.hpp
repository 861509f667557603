#pragma once

#include <cstdint>

#include "plad/lm/model.hpp"
#include "plad/train/config.hpp"

namespace plad::train {

// One adapter per attention/MLP weight matrix. A ~ N(0, 1/in), B = 0, so the
// adapted model computes exactly what the base model computes until B moves.
lm::AdapterSet apply_adapter(const lm::ModelParams& model, const LoraConfig& cfg, std::uint64_t seed);

// Folds (alpha / r) * (B A)^T into each targeted weight.
lm::ModelParams merge_adapter(const lm::ModelParams& model, const lm::AdapterSet& adapters);

}  // namespace plad::train
