#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plad/lm/vocabulary.hpp"
#include "plad/numerics/tensor.hpp"

namespace plad::lm {

using num::Tensor;

struct ArchConfig {
    int n_layers = 2;
    int width = 32;
    int n_heads = 2;
    int max_len = 32;  // context window, counting <bos>
    std::string positional = "learned";

    void validate() const;
    bool operator==(const ArchConfig&) const = default;
};

ArchConfig teacher_arch();
ArchConfig student_arch();

// Provenance recorded in every checkpoint.
struct ArtifactStamp {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string tag;
};

// Parameter tensors in declared order:
//   tok_emb [M x d], pos_emb [max_len x d],
//   per layer: ln1.g, ln1.b, wq, wk, wv, wo, ln2.g, ln2.b, w1, b1, w2, b2,
//   lnf.g, lnf.b.
// The output projection is tied to tok_emb. Linear weights are stored
// [in x out] so a layer computes x * W.
struct ModelParams {
    ArchConfig arch;
    Vocabulary vocab;
    std::vector<Tensor> tensors;
    ArtifactStamp stamp;

    std::size_t parameter_count() const;
    bool all_finite() const;
};

namespace layout {

enum class Slot : std::size_t { ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2 };
inline constexpr std::size_t kSlotsPerLayer = 12;
inline constexpr std::size_t kTokEmb = 0;
inline constexpr std::size_t kPosEmb = 1;

inline constexpr std::size_t layer(int l, Slot s) {
    return 2 + static_cast<std::size_t>(l) * kSlotsPerLayer + static_cast<std::size_t>(s);
}
inline constexpr std::size_t final_gain(int n_layers) { return 2 + static_cast<std::size_t>(n_layers) * kSlotsPerLayer; }
inline constexpr std::size_t final_bias(int n_layers) { return final_gain(n_layers) + 1; }
inline constexpr std::size_t tensor_count(int n_layers) { return final_bias(n_layers) + 1; }

std::string name(int n_layers, std::size_t index);
num::Shape shape(const ArchConfig& arch, int vocab_size, std::size_t index);
bool is_adaptable(int n_layers, std::size_t index);  // attention and MLP weight matrices
inline constexpr int mlp_width(int width) { return 4 * width; }

}  // namespace layout

// Random initialization: scaled normal weights, unit layer-norm gains.
ModelParams init_model(const ArchConfig& arch, const Vocabulary& vocab, std::uint64_t seed);
// All tensors zero except layer-norm gains (one); logits are then zero.
ModelParams zero_model(const ArchConfig& arch, const Vocabulary& vocab);

// Low-rank additive delta on one [in x out] weight: W0 + (alpha / r) * (B A)^T
// with A [r x in] and B [out x r].
struct LowRankAdapter {
    std::size_t target = 0;  // tensor index in ModelParams
    Tensor a;
    Tensor b;
    double alpha = 32.0;
    int rank = 8;
    double dropout = 0.1;

    double scaling() const { return alpha / static_cast<double>(rank); }
};

struct AdapterSet {
    std::vector<LowRankAdapter> adapters;

    const LowRankAdapter* find(std::size_t target) const;
};

}  // namespace plad::lm
