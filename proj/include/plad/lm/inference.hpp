#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "plad/lm/model.hpp"
#include "plad/numerics/random.hpp"

namespace plad::lm {

struct ContextOverflow : std::length_error {
    using std::length_error::length_error;
};

// p(. | x, prefix) at temperature gamma. Needs 1 + |x| + |prefix| <= max_len.
std::vector<double> next_token_distribution(const ModelParams& model, std::span<const int> prompt,
                                            std::span<const int> prefix, double gamma,
                                            const AdapterSet* adapters = nullptr);

// sum_n log p(y_n | x, y_<n) including the <eos> term when present; divided
// by |y| when length_normalize is set.
double sequence_log_likelihood(const ModelParams& model, std::span<const int> prompt, std::span<const int> output,
                               bool length_normalize, const AdapterSet* adapters = nullptr);

// Ancestral sampling at temperature gamma until <eos> or max_len tokens.
Tokens sample(const ModelParams& model, std::span<const int> prompt, double gamma, int max_len, std::uint64_t seed,
              const AdapterSet* adapters = nullptr);
Tokens sample(const ModelParams& model, std::span<const int> prompt, double gamma, int max_len, num::Rng& rng,
              const AdapterSet* adapters = nullptr);

// Argmax decoding, lowest id wins ties.
Tokens greedy_decode(const ModelParams& model, std::span<const int> prompt, int max_len,
                     const AdapterSet* adapters = nullptr);

// L2-normalized final hidden state for each token of seq, with context
// (after <bos>) prepended.
std::vector<std::vector<double>> hidden_embeddings(const ModelParams& model, std::span<const int> seq,
                                                   std::span<const int> context,
                                                   const AdapterSet* adapters = nullptr);

// Logits [T x M] for an arbitrary id sequence, without recording gradients.
num::Tensor logits(const ModelParams& model, std::span<const int> ids, const AdapterSet* adapters = nullptr);

}  // namespace plad::lm
