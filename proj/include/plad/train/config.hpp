#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace plad::train {

enum class LossKind { sft, standard_kd, seqkd, cal_rank, cal_margin };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct LoraConfig {
    int rank = 8;
    double alpha = 32.0;
    double dropout = 0.1;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 8;
    int epochs = 1;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::sft;
    double beta = 1.0;
    double gamma = 0.7;
    bool length_normalize = false;
    std::optional<LoraConfig> lora;
    double max_grad_norm = 1.0;  // 0 disables clipping

    void validate() const;
};

}  // namespace plad::train
