#include "plad/train/supervised.hpp"

#include <cmath>
#include <stdexcept>

#include "plad/lm/inference.hpp"

namespace plad::train {

namespace {

void require_nonempty_targets(std::span<const LabeledExample> data) {
    for (const auto& ex : data) {
        if (ex.target.empty()) throw std::invalid_argument("training example with an empty target");
    }
}

// Teacher distributions at the output positions, [|y| x M].
num::Tensor teacher_targets(const lm::ModelParams& teacher, const LabeledExample& ex) {
    const auto ids = lm::teacher_forced_input(teacher.vocab, ex.prompt, ex.target);
    const num::Tensor lg = lm::logits(teacher, ids);
    const std::size_t M = lg.cols();
    num::Tensor p({ex.target.size(), M});
    for (std::size_t n = 0; n < ex.target.size(); ++n) {
        auto row = num::softmax_temperature(lg.row(ex.prompt.size() + n), 1.0);
        std::copy(row.begin(), row.end(), p.row(n).begin());
    }
    return p;
}

// KL(p || q) summed over rows of p, with q's differentiable log-probabilities.
num::Var kd_item_loss(const lm::Binding& b, const LabeledExample& ex, const num::Tensor& p) {
    const auto ids = lm::teacher_forced_input(b.model().vocab, ex.prompt, ex.target);
    num::Var logq = num::log_softmax_rows(lm::forward_logits(b, ids));
    const std::size_t M = p.cols();
    num::Tensor w({ids.size(), M}, 0.0);
    double neg_entropy = 0.0;
    for (std::size_t n = 0; n < ex.target.size(); ++n) {
        for (std::size_t v = 0; v < M; ++v) {
            const double pv = p.at(n, v);
            w.at(ex.prompt.size() + n, v) = pv;
            if (pv > 0.0) neg_entropy += pv * std::log(pv);
        }
    }
    return num::add_scalar(num::scale(num::dot_const(logq, w), -1.0), neg_entropy);
}

void require_shared_vocab(const lm::ModelParams& teacher, const lm::ModelParams& student) {
    if (!(teacher.vocab == student.vocab)) throw std::invalid_argument("teacher and student vocabularies differ");
}

}  // namespace

TrainResult sft_train(const lm::ModelParams& model, std::span<const LabeledExample> data, const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("sft_train needs a non-empty dataset");
    require_nonempty_targets(data);
    Loop loop;
    loop.n_items = data.size();
    loop.item_loss = [data](const lm::Binding& b, std::size_t i) {
        const auto& ex = data[i];
        ItemOutput out;
        out.loss = num::scale(lm::sequence_log_likelihood(b, ex.prompt, ex.target, true), -1.0);
        out.weight = static_cast<double>(ex.target.size());
        return out;
    };
    return run_training(model, cfg, loop);
}

double standard_kd_loss(const lm::ModelParams& teacher, const lm::ModelParams& student,
                        std::span<const LabeledExample> batch) {
    require_shared_vocab(teacher, student);
    require_nonempty_targets(batch);
    double total = 0.0;
    std::size_t positions = 0;
    for (const auto& ex : batch) {
        num::Tape tape(false);
        lm::Binding b(tape, student);
        total += kd_item_loss(b, ex, teacher_targets(teacher, ex)).value().item();
        positions += ex.target.size();
    }
    return positions ? total / static_cast<double>(positions) : 0.0;
}

TrainResult standard_kd_train(const lm::ModelParams& teacher, const lm::ModelParams& student,
                              std::span<const LabeledExample> data, const TrainConfig& cfg) {
    require_shared_vocab(teacher, student);
    if (data.empty()) throw std::invalid_argument("standard_kd_train needs a non-empty dataset");
    require_nonempty_targets(data);
    // The teacher is frozen, so its per-position distributions are computed once.
    std::vector<num::Tensor> targets;
    targets.reserve(data.size());
    for (const auto& ex : data) targets.push_back(teacher_targets(teacher, ex));
    Loop loop;
    loop.n_items = data.size();
    loop.item_loss = [data, &targets](const lm::Binding& b, std::size_t i) {
        ItemOutput out;
        const double n = static_cast<double>(data[i].target.size());
        out.loss = num::scale(kd_item_loss(b, data[i], targets[i]), 1.0 / n);
        out.weight = n;
        return out;
    };
    return run_training(student, cfg, loop);
}

TrainResult seqkd_train(const lm::ModelParams& teacher, const lm::ModelParams& student,
                        std::span<const lm::Tokens> prompts, int max_output_len, const TrainConfig& cfg) {
    require_shared_vocab(teacher, student);
    if (prompts.empty()) return TrainResult{student, {}};
    std::vector<LabeledExample> data;
    data.reserve(prompts.size());
    for (const auto& p : prompts) data.push_back({p, lm::greedy_decode(teacher, p, max_output_len)});
    return sft_train(student, data, cfg);
}

double mean_token_nll(const lm::ModelParams& model, std::span<const LabeledExample> data) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& ex : data) {
        total -= lm::sequence_log_likelihood(model, ex.prompt, ex.target, false);
        tokens += ex.target.size();
    }
    return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace plad::train
