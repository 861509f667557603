#include "plad/calibration/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>

#include "plad/lm/inference.hpp"

namespace plad::calibration {

namespace {

std::span<const int> content(const lm::Vocabulary& vocab, std::span<const int> y) {
    if (!y.empty() && y.back() == vocab.eos()) return y.first(y.size() - 1);
    return y;
}

Embeddings ngram_embeddings(const Embeddings& tokens, std::size_t n) {
    Embeddings out;
    if (tokens.size() < n) return out;
    const std::size_t d = tokens.front().size();
    for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
        std::vector<double> e(d, 0.0);
        for (std::size_t k = start; k < start + n; ++k)
            for (std::size_t j = 0; j < d; ++j) e[j] += tokens[k][j];
        double norm = 0.0;
        for (double v : e) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& v : e) v /= norm;
        out.push_back(std::move(e));
    }
    return out;
}

double clamped_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return std::max(0.0, s);
}

// Mean over `from` of the best match in `to`.
double greedy_match(const Embeddings& from, const Embeddings& to) {
    double total = 0.0;
    for (const auto& g : from) {
        double best = 0.0;
        for (const auto& h : to) best = std::max(best, clamped_dot(g, h));
        total += best;
    }
    return total / static_cast<double>(from.size());
}

}  // namespace

void CalLossConfig::validate() const {
    if (!(beta >= 0.0)) throw std::invalid_argument("calibration: beta must be >= 0");
    if (n_max < 1) throw std::invalid_argument("calibration: n_max must be >= 1");
}

double rank_loss(double logp_plus, double logp_minus, double beta) {
    return std::max(0.0, beta - logp_plus + logp_minus);
}

double margin_loss(double logp_plus, double logp_minus, double s_plus, double s_minus, double beta) {
    return std::max(0.0, beta * (s_plus - s_minus) - logp_plus + logp_minus);
}

Score score_embeddings(const Embeddings& candidate, const Embeddings& reference, int n_max) {
    if (n_max < 1) throw std::invalid_argument("score: n_max must be >= 1");
    Score s;
    for (int n = 1; n <= n_max; ++n) {
        const auto gc = ngram_embeddings(candidate, static_cast<std::size_t>(n));
        const auto gr = ngram_embeddings(reference, static_cast<std::size_t>(n));
        double f = 0.0;
        if (!gc.empty() && !gr.empty()) {
            const double p = greedy_match(gc, gr);
            const double r = greedy_match(gr, gc);
            f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        }
        s.f.push_back(f);
        s.total += f;
    }
    return s;
}

Score score(const lm::ModelParams& student, std::span<const int> x, std::span<const int> y_hat,
            std::span<const int> ref, int n_max, const lm::AdapterSet* adapters) {
    const auto a = content(student.vocab, y_hat);
    const auto b = content(student.vocab, ref);
    return score_embeddings(lm::hidden_embeddings(student, a, x, adapters), lm::hidden_embeddings(student, b, x, adapters),
                            n_max);
}

std::vector<double> pair_margins(const lm::ModelParams& student, std::span<const preference::PreferencePair> pairs,
                                 const References* references, const CalLossConfig& cal,
                                 const lm::AdapterSet* adapters) {
    std::vector<double> out(pairs.size(), cal.beta);
    if (cal.variant == Variant::rank) return out;
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        const lm::Tokens* ref = &p.chosen;
        if (references) ref = &references->at(p.example_id);
        const double sp = score(student, p.prompt, p.chosen, *ref, cal.n_max, adapters).total;
        const double sm = score(student, p.prompt, p.rejected, *ref, cal.n_max, adapters).total;
        out[static_cast<std::size_t>(i)] = cal.beta * (sp - sm);
    }
    return out;
}

num::Var calibration_loss(const lm::Binding& b, std::span<const preference::PreferencePair> batch,
                          std::span<const double> margins, bool length_normalize) {
    if (batch.empty() || batch.size() != margins.size())
        throw std::invalid_argument("calibration_loss: batch and margins must be non-empty and aligned");
    num::Var total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& p = batch[i];
        const num::Var lp = lm::sequence_log_likelihood(b, p.prompt, p.chosen, length_normalize);
        const num::Var lm_ = lm::sequence_log_likelihood(b, p.prompt, p.rejected, length_normalize);
        const num::Var h = num::hinge(num::add_scalar(num::sub(lm_, lp), margins[i]));
        total = i == 0 ? h : num::add(total, h);
    }
    return num::scale(total, 1.0 / static_cast<double>(batch.size()));
}

double mean_log_likelihood_gap(const lm::ModelParams& model, std::span<const preference::PreferencePair> pairs,
                               bool length_normalize) {
    if (pairs.empty()) throw std::invalid_argument("mean_log_likelihood_gap needs pairs");
    std::vector<double> gaps(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        gaps[static_cast<std::size_t>(i)] = lm::sequence_log_likelihood(model, p.prompt, p.chosen, length_normalize) -
                                            lm::sequence_log_likelihood(model, p.prompt, p.rejected, length_normalize);
    }
    double s = 0.0;
    for (double g : gaps) s += g;
    return s / static_cast<double>(pairs.size());
}

DistillResult distill_train(const lm::ModelParams& student, std::span<const preference::PreferencePair> pairs,
                            const References* references, const train::TrainConfig& cfg, const CalLossConfig& cal) {
    cal.validate();
    if (pairs.empty()) throw std::invalid_argument("distill_train needs at least one pair");
    if (cal.variant == Variant::margin && references) {
        for (const auto& p : pairs) {
            if (!references->contains(p.example_id))
                throw std::invalid_argument("distill_train: no reference for example " + std::to_string(p.example_id));
        }
    }
    for (const auto& p : pairs) {
        if (p.chosen.empty() || p.rejected.empty()) throw std::invalid_argument("distill_train: empty output in pair");
    }

    auto margins = std::make_shared<std::vector<double>>(pair_margins(student, pairs, references, cal));
    train::Loop loop;
    loop.n_items = pairs.size();
    loop.item_loss = [pairs, margins, &cal](const lm::Binding& b, std::size_t i) {
        const auto& p = pairs[i];
        const num::Var lp = lm::sequence_log_likelihood(b, p.prompt, p.chosen, cal.length_normalize);
        const num::Var lm_ = lm::sequence_log_likelihood(b, p.prompt, p.rejected, cal.length_normalize);
        const double gap = lp.value().item() - lm_.value().item();
        train::ItemOutput out;
        out.loss = num::hinge(num::add_scalar(num::sub(lm_, lp), (*margins)[i]));
        out.metrics = {gap, (*margins)[i] - gap > 0.0 ? 1.0 : 0.0};
        return out;
    };
    if (cal.variant == Variant::margin && !cal.freeze_scores) {
        loop.before_batch = [pairs, margins, references, &cal](const lm::ModelParams& model, const lm::AdapterSet* adapters,
                                                                const std::vector<std::size_t>& batch) {
            std::vector<preference::PreferencePair> subset;
            subset.reserve(batch.size());
            for (std::size_t i : batch) subset.push_back(pairs[i]);
            const auto fresh = pair_margins(model, subset, references, cal, adapters);
            for (std::size_t k = 0; k < batch.size(); ++k) (*margins)[batch[k]] = fresh[k];
        };
    }
    auto res = train::run_training(student, cfg, loop);
    DistillResult out{std::move(res.model), {}};
    out.log.reserve(res.log.size());
    for (const auto& s : res.log) out.log.push_back({s.step, s.loss, s.lr, s.metrics[0], s.metrics[1]});
    return out;
}

void write_calibration_log_csv(std::ostream& out, const std::vector<CalStepLog>& log) {
    out << "step,loss,mean_gap,hinge_active_fraction\n";
    char buf[160];
    for (const auto& s : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", s.step, s.loss, s.mean_gap, s.hinge_active_fraction);
        out << buf;
    }
}

}  // namespace plad::calibration
