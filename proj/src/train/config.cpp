#include "plad/train/config.hpp"

#include <stdexcept>

namespace plad::train {

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::sft:
            return "sft";
        case LossKind::standard_kd:
            return "standard_kd";
        case LossKind::seqkd:
            return "seqkd";
        case LossKind::cal_rank:
            return "cal_rank";
        case LossKind::cal_margin:
            return "cal_margin";
    }
    return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "sft") return LossKind::sft;
    if (s == "standard_kd") return LossKind::standard_kd;
    if (s == "seqkd") return LossKind::seqkd;
    if (s == "cal_rank" || s == "rank") return LossKind::cal_rank;
    if (s == "cal_margin" || s == "margin") return LossKind::cal_margin;
    throw std::invalid_argument("unknown loss '" + s + "'");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (!(beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (max_grad_norm < 0.0) throw std::invalid_argument("max_grad_norm must be non-negative");
    if (lora) {
        if (lora->rank < 1) throw std::invalid_argument("lora.rank must be at least 1");
        if (!(lora->alpha > 0.0)) throw std::invalid_argument("lora.alpha must be positive");
        if (lora->dropout < 0.0 || lora->dropout >= 1.0) throw std::invalid_argument("lora.dropout must be in [0, 1)");
    }
}

}  // namespace plad::train
