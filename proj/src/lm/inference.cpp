#include "plad/lm/inference.hpp"

#include <cmath>
#include <string>

#include "plad/lm/forward.hpp"

namespace plad::lm {

namespace {

void check_context(const ModelParams& model, std::size_t tokens) {
    if (tokens > static_cast<std::size_t>(model.arch.max_len)) {
        throw ContextOverflow("context of " + std::to_string(tokens) + " tokens exceeds window " +
                              std::to_string(model.arch.max_len));
    }
}

std::vector<int> with_bos(const ModelParams& model, std::span<const int> prompt, std::span<const int> prefix) {
    std::vector<int> ids;
    ids.reserve(1 + prompt.size() + prefix.size());
    ids.push_back(model.vocab.bos());
    ids.insert(ids.end(), prompt.begin(), prompt.end());
    ids.insert(ids.end(), prefix.begin(), prefix.end());
    return ids;
}

std::vector<double> last_row_distribution(const ModelParams& model, const std::vector<int>& ids, double gamma,
                                          const AdapterSet* adapters) {
    const Tensor lg = logits(model, ids, adapters);
    return num::softmax_temperature(lg.row(lg.rows() - 1), gamma);
}

int draw(const std::vector<double>& p, num::Rng& rng) {
    const double u = rng.uniform();
    double c = 0.0;
    int last_nonzero = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) last_nonzero = static_cast<int>(i);
        c += p[i];
        if (u < c) return static_cast<int>(i);
    }
    return last_nonzero;
}

}  // namespace

Tensor logits(const ModelParams& model, std::span<const int> ids, const AdapterSet* adapters) {
    check_context(model, ids.size());
    Tape tape(false);
    Binding b(tape, model, Trainable::none, adapters);
    return forward_logits(b, ids).value();
}

std::vector<double> next_token_distribution(const ModelParams& model, std::span<const int> prompt,
                                            std::span<const int> prefix, double gamma, const AdapterSet* adapters) {
    check_context(model, 1 + prompt.size() + prefix.size());
    return last_row_distribution(model, with_bos(model, prompt, prefix), gamma, adapters);
}

double sequence_log_likelihood(const ModelParams& model, std::span<const int> prompt, std::span<const int> output,
                               bool length_normalize, const AdapterSet* adapters) {
    if (output.empty()) throw std::invalid_argument("log-likelihood of an empty output sequence");
    Tape tape(false);
    Binding b(tape, model, Trainable::none, adapters);
    return sequence_log_likelihood(b, prompt, output, length_normalize).value().item();
}

Tokens sample(const ModelParams& model, std::span<const int> prompt, double gamma, int max_len, num::Rng& rng,
              const AdapterSet* adapters) {
    if (!(gamma > 0.0)) throw std::invalid_argument("sampling temperature must be positive");
    Tokens out;
    std::vector<int> ids = with_bos(model, prompt, {});
    while (static_cast<int>(out.size()) < max_len) {
        check_context(model, ids.size());
        const int tok = draw(last_row_distribution(model, ids, gamma, adapters), rng);
        out.push_back(tok);
        ids.push_back(tok);
        if (tok == model.vocab.eos()) break;
    }
    return out;
}

Tokens sample(const ModelParams& model, std::span<const int> prompt, double gamma, int max_len, std::uint64_t seed,
              const AdapterSet* adapters) {
    num::Rng rng(seed);
    return sample(model, prompt, gamma, max_len, rng, adapters);
}

Tokens greedy_decode(const ModelParams& model, std::span<const int> prompt, int max_len, const AdapterSet* adapters) {
    Tokens out;
    std::vector<int> ids = with_bos(model, prompt, {});
    while (static_cast<int>(out.size()) < max_len) {
        check_context(model, ids.size());
        const Tensor lg = logits(model, ids, adapters);
        const auto row = lg.row(lg.rows() - 1);
        int best = 0;
        for (std::size_t i = 1; i < row.size(); ++i) {
            if (row[i] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
        }
        out.push_back(best);
        ids.push_back(best);
        if (best == model.vocab.eos()) break;
    }
    return out;
}

std::vector<std::vector<double>> hidden_embeddings(const ModelParams& model, std::span<const int> seq,
                                                   std::span<const int> context, const AdapterSet* adapters) {
    if (seq.empty()) return {};
    const auto ids = with_bos(model, context, seq);
    check_context(model, ids.size());
    Tape tape(false);
    Binding b(tape, model, Trainable::none, adapters);
    const Tensor h = forward_hidden(b, ids).value();
    std::vector<std::vector<double>> out;
    out.reserve(seq.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto row = h.row(1 + context.size() + i);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        std::vector<double> e(row.begin(), row.end());
        if (norm > 0.0) {
            for (double& v : e) v /= norm;
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace plad::lm
