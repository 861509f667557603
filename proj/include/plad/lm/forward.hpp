#pragma once

#include <span>
#include <vector>

#include "plad/lm/model.hpp"
#include "plad/numerics/autograd.hpp"
#include "plad/numerics/random.hpp"

namespace plad::lm {

using num::Tape;
using num::Var;

// Which tensors receive gradients.
enum class Trainable { none, full, adapters };

// Places a model (and optional adapters) on a tape. Tensors are borrowed, so
// the model and adapters must outlive the tape.
class Binding {
public:
    Binding(Tape& tape, const ModelParams& model, Trainable trainable = Trainable::none,
            const AdapterSet* adapters = nullptr, num::Rng* dropout_rng = nullptr);

    Tape& tape() const { return *tape_; }
    const ModelParams& model() const { return *model_; }
    Var param(std::size_t index) const { return params_[index]; }

    // x * W[index], plus the adapter path when one targets this weight.
    Var linear(Var x, std::size_t index) const;

    // Leaves that receive gradients, in a stable order: all model tensors for
    // Trainable::full, (A, B) per adapter for Trainable::adapters.
    std::vector<Var> trainable_vars() const;

private:
    Tape* tape_;
    const ModelParams* model_;
    const AdapterSet* adapters_;
    num::Rng* dropout_rng_;
    Trainable trainable_;
    std::vector<Var> params_;
    std::vector<std::pair<Var, Var>> adapter_vars_;
};

// Final-layer (post layer norm) hidden states, [ids.size() x width].
Var forward_hidden(const Binding& b, std::span<const int> ids);
// Next-token logits for every position, [ids.size() x M].
Var forward_logits(const Binding& b, std::span<const int> ids);

// Model input for predicting `output`: <bos> prompt output[0..n-2].
// Row prompt.size() + n of the logits predicts output[n].
std::vector<int> teacher_forced_input(const Vocabulary& vocab, std::span<const int> prompt,
                                      std::span<const int> output);

// Differentiable sum (or per-token mean) of log p(y_n | x, y_<n), gamma = 1.
Var sequence_log_likelihood(const Binding& b, std::span<const int> prompt, std::span<const int> output,
                            bool length_normalize);

}  // namespace plad::lm
