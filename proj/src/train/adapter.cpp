#include "plad/train/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "plad/numerics/random.hpp"

namespace plad::train {

lm::AdapterSet apply_adapter(const lm::ModelParams& model, const LoraConfig& cfg, std::uint64_t seed) {
    if (cfg.rank < 1) throw std::invalid_argument("adapter rank must be at least 1");
    num::Rng rng(seed);
    lm::AdapterSet set;
    for (std::size_t i = 0; i < model.tensors.size(); ++i) {
        if (!lm::layout::is_adaptable(model.arch.n_layers, i)) continue;
        const auto& w = model.tensors[i];
        const std::size_t in = w.rows(), out = w.cols();
        const auto r = static_cast<std::size_t>(cfg.rank);
        if (r > std::min(in, out)) {
            throw std::invalid_argument("adapter rank " + std::to_string(r) + " exceeds min dimension of " +
                                        lm::layout::name(model.arch.n_layers, i));
        }
        lm::LowRankAdapter ad;
        ad.target = i;
        ad.a = num::Tensor({r, in});
        const double sd = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : ad.a.values()) v = rng.normal(0.0, sd);
        ad.b = num::Tensor({out, r}, 0.0);
        ad.alpha = cfg.alpha;
        ad.rank = cfg.rank;
        ad.dropout = cfg.dropout;
        set.adapters.push_back(std::move(ad));
    }
    return set;
}

lm::ModelParams merge_adapter(const lm::ModelParams& model, const lm::AdapterSet& adapters) {
    lm::ModelParams merged = model;
    for (const auto& ad : adapters.adapters) {
        num::Tensor& w = merged.tensors.at(ad.target);
        const std::size_t in = w.rows(), out = w.cols(), r = static_cast<std::size_t>(ad.rank);
        if (ad.a.rows() != r || ad.a.cols() != in || ad.b.rows() != out || ad.b.cols() != r) {
            throw std::invalid_argument("adapter shape does not match its target weight");
        }
        const double s = ad.scaling();
        for (std::size_t i = 0; i < in; ++i) {
            for (std::size_t o = 0; o < out; ++o) {
                double d = 0.0;
                for (std::size_t k = 0; k < r; ++k) d += ad.b.at(o, k) * ad.a.at(k, i);
                w.at(i, o) += s * d;
            }
        }
    }
    return merged;
}

}  // namespace plad::train
