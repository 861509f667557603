#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plad/eval/reward.hpp"

namespace plad::eval {

// Percent of examples where reward(prompt, output) > reward(prompt, target).
// Ties are losses.
double win_rate(std::span<const std::string> outputs, std::span<const std::string> targets,
                std::span<const std::string> prompts, const RewardModel& reward);

// ROUGE F-measures in percent over lowercased whitespace words. Empty inputs
// score 0.
double rouge_n(std::string_view candidate, std::string_view reference, int n);
double rouge_l(std::string_view candidate, std::string_view reference);

std::size_t word_count(std::string_view text);
double mean_word_count(std::span<const std::string> texts);

inline const std::vector<double> kDefaultBucketEdges = {0, 10, 20, 30, 40, std::numeric_limits<double>::infinity()};

struct BucketRow {
    double lo = 0.0;  // bucket is (lo, hi]; the first one also holds lo
    double hi = 0.0;
    std::size_t count = 0;
    double method_win_rate = 0.0;
    double initial_win_rate = 0.0;
    double delta = 0.0;
    bool low_support = false;  // fewer than 5 examples
};

// Groups examples by the method output's word count and reports, per bucket,
// win rate of the method minus win rate of the initial student.
std::vector<BucketRow> length_bucketed_delta_win_rate(std::span<const std::string> method_outputs,
                                                      std::span<const std::string> initial_outputs,
                                                      std::span<const std::string> targets,
                                                      std::span<const std::string> prompts, const RewardModel& reward,
                                                      std::span<const double> edges = kDefaultBucketEdges);

// Indices of a seeded shuffle of 0..n-1, cut to ceil(fraction * n). Subsets
// for growing fractions under one seed are nested.
std::vector<std::size_t> fraction_subset(std::size_t n, double fraction, std::uint64_t seed);

struct ScalingPoint {
    double fraction = 0.0;
    double mean_win_rate = 0.0;
    double stddev = 0.0;
    std::vector<double> per_seed;
};

// Trains a fresh student on the given fraction of the distillation data and
// returns its win rate.
using ScalingRun = std::function<double(double fraction, std::uint64_t seed)>;

std::vector<ScalingPoint> scaling_curve(std::span<const double> fractions, std::span<const std::uint64_t> seeds,
                                        const ScalingRun& run);

enum class Preference { a, b, tie };

class Judge {
public:
    virtual ~Judge() = default;
    virtual Preference judge(std::string_view candidate_a, std::string_view candidate_b,
                             std::string_view prompt) const = 0;
};

// A wins iff its reward is strictly higher.
class RewardJudge final : public Judge {
public:
    explicit RewardJudge(const RewardModel& reward) : reward_(&reward) {}
    Preference judge(std::string_view candidate_a, std::string_view candidate_b,
                     std::string_view prompt) const override;

private:
    const RewardModel* reward_;
};

double mean(std::span<const double> xs);
double sample_stddev(std::span<const double> xs);
// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace plad::eval
