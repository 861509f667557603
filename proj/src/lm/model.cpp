#include "plad/lm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "plad/numerics/random.hpp"

namespace plad::lm {

void ArchConfig::validate() const {
    if (n_layers < 0) throw std::invalid_argument("n_layers must be non-negative");
    if (width < 1) throw std::invalid_argument("model width must be positive");
    if (n_heads < 1) throw std::invalid_argument("n_heads must be positive (attention blocks only)");
    if (width % n_heads != 0) throw std::invalid_argument("model width must be divisible by n_heads");
    if (max_len < 2) throw std::invalid_argument("max_len must be at least 2");
    if (positional != "learned") throw std::invalid_argument("unsupported positional scheme '" + positional + "'");
}

ArchConfig teacher_arch() { return ArchConfig{4, 32, 4, 32, "learned"}; }
ArchConfig student_arch() { return ArchConfig{2, 20, 2, 32, "learned"}; }

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

bool ModelParams::all_finite() const {
    for (const auto& t : tensors) {
        if (!t.all_finite()) return false;
    }
    return true;
}

namespace layout {

namespace {

constexpr const char* kSlotNames[kSlotsPerLayer] = {"ln1.g", "ln1.b", "wq",    "wk", "wv", "wo",
                                                    "ln2.g", "ln2.b", "w1",    "b1", "w2", "b2"};

}  // namespace

std::string name(int n_layers, std::size_t index) {
    if (index == kTokEmb) return "tok_emb";
    if (index == kPosEmb) return "pos_emb";
    if (index == final_gain(n_layers)) return "lnf.g";
    if (index == final_bias(n_layers)) return "lnf.b";
    if (index >= tensor_count(n_layers)) throw std::out_of_range("parameter index out of range");
    const std::size_t rel = index - 2;
    return "l" + std::to_string(rel / kSlotsPerLayer) + "." + kSlotNames[rel % kSlotsPerLayer];
}

num::Shape shape(const ArchConfig& arch, int vocab_size, std::size_t index) {
    const auto d = static_cast<std::size_t>(arch.width);
    const auto h = static_cast<std::size_t>(mlp_width(arch.width));
    if (index == kTokEmb) return {static_cast<std::size_t>(vocab_size), d};
    if (index == kPosEmb) return {static_cast<std::size_t>(arch.max_len), d};
    if (index == final_gain(arch.n_layers) || index == final_bias(arch.n_layers)) return {d};
    if (index >= tensor_count(arch.n_layers)) throw std::out_of_range("parameter index out of range");
    switch (static_cast<Slot>((index - 2) % kSlotsPerLayer)) {
        case Slot::wq:
        case Slot::wk:
        case Slot::wv:
        case Slot::wo:
            return {d, d};
        case Slot::w1:
            return {d, h};
        case Slot::b1:
            return {h};
        case Slot::w2:
            return {h, d};
        default:
            return {d};
    }
}

bool is_adaptable(int n_layers, std::size_t index) {
    if (index < 2 || index >= final_gain(n_layers)) return false;
    switch (static_cast<Slot>((index - 2) % kSlotsPerLayer)) {
        case Slot::wq:
        case Slot::wk:
        case Slot::wv:
        case Slot::wo:
        case Slot::w1:
        case Slot::w2:
            return true;
        default:
            return false;
    }
}

}  // namespace layout

namespace {

bool is_gain(int n_layers, std::size_t i) {
    if (i == layout::final_gain(n_layers)) return true;
    if (i < 2 || i >= layout::final_gain(n_layers)) return false;
    const auto s = static_cast<layout::Slot>((i - 2) % layout::kSlotsPerLayer);
    return s == layout::Slot::ln1_g || s == layout::Slot::ln2_g;
}

ModelParams empty_model(const ArchConfig& arch, const Vocabulary& vocab) {
    arch.validate();
    if (vocab.size() < 3) throw std::invalid_argument("vocabulary must hold at least the special tokens");
    ModelParams m;
    m.arch = arch;
    m.vocab = vocab;
    const std::size_t n = layout::tensor_count(arch.n_layers);
    m.tensors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        m.tensors.emplace_back(layout::shape(arch, vocab.size(), i), is_gain(arch.n_layers, i) ? 1.0 : 0.0);
    }
    return m;
}

}  // namespace

ModelParams zero_model(const ArchConfig& arch, const Vocabulary& vocab) { return empty_model(arch, vocab); }

ModelParams init_model(const ArchConfig& arch, const Vocabulary& vocab, std::uint64_t seed) {
    ModelParams m = empty_model(arch, vocab);
    num::Rng rng(seed);
    const double resid_scale = 1.0 / std::sqrt(2.0 * std::max(1, arch.n_layers));
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
        Tensor& t = m.tensors[i];
        double stddev = 0.0;
        if (i == layout::kTokEmb || i == layout::kPosEmb) {
            stddev = 0.1;
        } else if (layout::is_adaptable(arch.n_layers, i)) {
            stddev = 1.0 / std::sqrt(static_cast<double>(t.rows()));
            const auto s = static_cast<layout::Slot>((i - 2) % layout::kSlotsPerLayer);
            if (s == layout::Slot::wo || s == layout::Slot::w2) stddev *= resid_scale;
        }
        if (stddev > 0.0) {
            for (double& v : t.values()) v = rng.normal(0.0, stddev);
        }
    }
    return m;
}

const LowRankAdapter* AdapterSet::find(std::size_t target) const {
    for (const auto& a : adapters) {
        if (a.target == target) return &a;
    }
    return nullptr;
}

}  // namespace plad::lm
