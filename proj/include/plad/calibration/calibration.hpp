#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "plad/lm/forward.hpp"
#include "plad/preference/pairs.hpp"
#include "plad/train/trainer.hpp"

namespace plad::calibration {

enum class Variant { rank, margin };

struct CalLossConfig {
    Variant variant = Variant::rank;
    double beta = 1.0;
    int n_max = 2;
    bool length_normalize = false;
    // Score embeddings come from the student before training instead of the
    // current student at each batch.
    bool freeze_scores = false;

    void validate() const;
};

// max(0, beta - logp_plus + logp_minus)
double rank_loss(double logp_plus, double logp_minus, double beta);
// max(0, beta * (s_plus - s_minus) - logp_plus + logp_minus)
double margin_loss(double logp_plus, double logp_minus, double s_plus, double s_minus, double beta);

using Embeddings = std::vector<std::vector<double>>;

struct Score {
    std::vector<double> f;  // f[n - 1] = F_n
    double total = 0.0;
};

// Greedy-matching similarity of two token-embedding sequences. Each n-gram is
// the re-normalized mean of its token vectors; similarities are clamped at 0.
// An order with no n-grams on either side contributes 0.
Score score_embeddings(const Embeddings& candidate, const Embeddings& reference, int n_max);

// Score of y_hat against ref, both embedded by `student` after prompt x.
// <eos> is not part of either sequence.
Score score(const lm::ModelParams& student, std::span<const int> x, std::span<const int> y_hat,
            std::span<const int> ref, int n_max, const lm::AdapterSet* adapters = nullptr);

using References = std::map<std::uint64_t, lm::Tokens>;

// Hinge margin per pair: beta for the rank variant, beta * (s+ - s-) for
// the margin variant. References default to the chosen output when absent.
std::vector<double> pair_margins(const lm::ModelParams& student, std::span<const preference::PreferencePair> pairs,
                                 const References* references, const CalLossConfig& cal,
                                 const lm::AdapterSet* adapters = nullptr);

// Mean over the batch of max(0, margin_i - logp+_i + logp-_i), on the tape.
num::Var calibration_loss(const lm::Binding& b, std::span<const preference::PreferencePair> batch,
                          std::span<const double> margins, bool length_normalize);

// mean(logp+ - logp-) over the pairs.
double mean_log_likelihood_gap(const lm::ModelParams& model, std::span<const preference::PreferencePair> pairs,
                               bool length_normalize);

struct CalStepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double mean_gap = 0.0;
    double hinge_active_fraction = 0.0;
};

struct DistillResult {
    lm::ModelParams model;
    std::vector<CalStepLog> log;
};

// Mini-batch descent on the calibration loss. For the margin variant every
// pair needs a reference unless `references` is null, in which case the
// chosen output is the reference.
DistillResult distill_train(const lm::ModelParams& student, std::span<const preference::PreferencePair> pairs,
                            const References* references, const train::TrainConfig& cfg, const CalLossConfig& cal);

// Columns: step,loss,mean_gap,hinge_active_fraction.
void write_calibration_log_csv(std::ostream& out, const std::vector<CalStepLog>& log);

}  // namespace plad::calibration
