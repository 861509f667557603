#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "plad/lm/forward.hpp"
#include "plad/train/config.hpp"

namespace plad::train {

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::array<double, 2> metrics{};  // loss-specific, averaged like the loss
};

struct TrainResult {
    lm::ModelParams model;
    std::vector<StepLog> log;
};

// Per-item contribution to a mini-batch. The batch loss is the weighted mean
// of item losses with weights `weight`.
struct ItemOutput {
    num::Var loss;
    double weight = 1.0;
    std::array<double, 2> metrics{};
};

using ItemLossFn = std::function<ItemOutput(const lm::Binding&, std::size_t item)>;
// Called before each batch with the current weights (base + adapters).
using BatchHook = std::function<void(const lm::ModelParams&, const lm::AdapterSet*, const std::vector<std::size_t>&)>;

struct Loop {
    std::size_t n_items = 0;
    ItemLossFn item_loss;
    BatchHook before_batch;
};

// Mini-batch Adam (0.9, 0.999, 1e-8) with a linear decay to zero over all
// planned steps. Items of a batch are differentiated on independent tapes,
// optionally in parallel, and reduced in item order.
TrainResult run_training(const lm::ModelParams& initial, const TrainConfig& cfg, const Loop& loop);

std::size_t planned_steps(std::size_t n_items, const TrainConfig& cfg);
double learning_rate_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

// Columns: step,loss,lr.
void write_step_log_csv(std::ostream& out, const std::vector<StepLog>& log);

}  // namespace plad::train
