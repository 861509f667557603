#pragma once

#include <span>
#include <vector>

#include "plad/lm/model.hpp"
#include "plad/train/trainer.hpp"

namespace plad::train {

struct LabeledExample {
    lm::Tokens prompt;
    lm::Tokens target;  // ends with <eos> unless truncated at max_len
};

// Minimizes the mean per-token negative log-likelihood of the targets.
TrainResult sft_train(const lm::ModelParams& model, std::span<const LabeledExample> data, const TrainConfig& cfg);

// Word-level KD: mean over target positions of KL(p_teacher || q_student)
// with contexts teacher-forced from the targets.
double standard_kd_loss(const lm::ModelParams& teacher, const lm::ModelParams& student,
                        std::span<const LabeledExample> batch);
TrainResult standard_kd_train(const lm::ModelParams& teacher, const lm::ModelParams& student,
                              std::span<const LabeledExample> data, const TrainConfig& cfg);

// Sequence-level KD: greedy-decodes the teacher on each prompt and runs SFT
// of the student on those outputs.
TrainResult seqkd_train(const lm::ModelParams& teacher, const lm::ModelParams& student,
                        std::span<const lm::Tokens> prompts, int max_output_len, const TrainConfig& cfg);

// Mean per-token NLL of the targets under `model`.
double mean_token_nll(const lm::ModelParams& model, std::span<const LabeledExample> data);

}  // namespace plad::train
