#include "plad/lm/forward.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "plad/lm/inference.hpp"

namespace plad::lm {

using layout::Slot;

Binding::Binding(Tape& tape, const ModelParams& model, Trainable trainable, const AdapterSet* adapters,
                 num::Rng* dropout_rng)
    : tape_(&tape), model_(&model), adapters_(adapters), dropout_rng_(dropout_rng), trainable_(trainable) {
    if (trainable == Trainable::adapters && adapters == nullptr) {
        throw std::invalid_argument("adapter training requested without adapters");
    }
    params_.reserve(model.tensors.size());
    for (const auto& t : model.tensors) params_.push_back(tape.borrow(t, trainable == Trainable::full));
    if (adapters_) {
        for (const auto& a : adapters_->adapters) {
            const bool g = trainable == Trainable::adapters;
            adapter_vars_.emplace_back(tape.borrow(a.a, g), tape.borrow(a.b, g));
        }
    }
}

Var Binding::linear(Var x, std::size_t index) const {
    Var y = num::matmul(x, params_[index]);
    if (!adapters_) return y;
    for (std::size_t i = 0; i < adapters_->adapters.size(); ++i) {
        const LowRankAdapter& ad = adapters_->adapters[i];
        if (ad.target != index) continue;
        Var in = x;
        if (dropout_rng_ && ad.dropout > 0.0) {
            const Tensor& xv = x.value();
            Tensor mask(xv.shape());
            const double keep = 1.0 - ad.dropout;
            for (double& m : mask.values()) m = dropout_rng_->uniform() < keep ? 1.0 / keep : 0.0;
            in = num::mul_const(x, mask);
        }
        // (x A^T) B^T = x (B A)^T
        Var low = num::matmul_nt(num::matmul_nt(in, adapter_vars_[i].first), adapter_vars_[i].second);
        y = num::add(y, num::scale(low, ad.scaling()));
    }
    return y;
}

std::vector<Var> Binding::trainable_vars() const {
    std::vector<Var> out;
    if (trainable_ == Trainable::full) return params_;
    if (trainable_ == Trainable::adapters) {
        for (const auto& [a, b] : adapter_vars_) {
            out.push_back(a);
            out.push_back(b);
        }
    }
    return out;
}

Var forward_hidden(const Binding& b, std::span<const int> ids) {
    const ModelParams& m = b.model();
    const ArchConfig& arch = m.arch;
    if (ids.empty()) throw std::invalid_argument("forward pass on an empty sequence");
    if (ids.size() > static_cast<std::size_t>(arch.max_len)) {
        throw ContextOverflow("sequence of " + std::to_string(ids.size()) + " tokens exceeds context window " +
                              std::to_string(arch.max_len));
    }
    std::vector<int> positions(ids.size());
    std::iota(positions.begin(), positions.end(), 0);
    Var h = num::add(num::embedding(b.param(layout::kTokEmb), ids), num::embedding(b.param(layout::kPosEmb), positions));
    const auto heads = static_cast<std::size_t>(arch.n_heads);
    for (int l = 0; l < arch.n_layers; ++l) {
        auto P = [&](Slot s) { return layout::layer(l, s); };
        Var a = num::layer_norm(h, b.param(P(Slot::ln1_g)), b.param(P(Slot::ln1_b)));
        Var q = b.linear(a, P(Slot::wq));
        Var k = b.linear(a, P(Slot::wk));
        Var v = b.linear(a, P(Slot::wv));
        Var att = num::causal_attention(q, k, v, heads);
        h = num::add(h, b.linear(att, P(Slot::wo)));
        Var f = num::layer_norm(h, b.param(P(Slot::ln2_g)), b.param(P(Slot::ln2_b)));
        f = num::gelu(num::add_row(b.linear(f, P(Slot::w1)), b.param(P(Slot::b1))));
        f = num::add_row(b.linear(f, P(Slot::w2)), b.param(P(Slot::b2)));
        h = num::add(h, f);
    }
    return num::layer_norm(h, b.param(layout::final_gain(arch.n_layers)), b.param(layout::final_bias(arch.n_layers)));
}

Var forward_logits(const Binding& b, std::span<const int> ids) {
    return num::matmul_nt(forward_hidden(b, ids), b.param(layout::kTokEmb));
}

std::vector<int> teacher_forced_input(const Vocabulary& vocab, std::span<const int> prompt,
                                      std::span<const int> output) {
    std::vector<int> ids;
    ids.reserve(prompt.size() + output.size());
    ids.push_back(vocab.bos());
    ids.insert(ids.end(), prompt.begin(), prompt.end());
    if (!output.empty()) ids.insert(ids.end(), output.begin(), output.end() - 1);
    return ids;
}

Var sequence_log_likelihood(const Binding& b, std::span<const int> prompt, std::span<const int> output,
                            bool length_normalize) {
    if (output.empty()) throw std::invalid_argument("log-likelihood of an empty output sequence");
    for (int id : output) {
        if (id < 0 || id >= b.model().vocab.size()) throw std::out_of_range("output token id outside vocabulary");
    }
    const auto ids = teacher_forced_input(b.model().vocab, prompt, output);
    Var logp = num::log_softmax_rows(forward_logits(b, ids));
    const auto M = static_cast<std::size_t>(b.model().vocab.size());
    Tensor w({ids.size(), M}, 0.0);
    const double unit = length_normalize ? 1.0 / static_cast<double>(output.size()) : 1.0;
    for (std::size_t n = 0; n < output.size(); ++n) {
        w.at(prompt.size() + n, static_cast<std::size_t>(output[n])) = unit;
    }
    return num::dot_const(logp, w);
}

}  // namespace plad::lm
