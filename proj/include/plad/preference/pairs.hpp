#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plad/eval/reward.hpp"
#include "plad/lm/model.hpp"

namespace plad::preference {

enum class Provenance { pseudo, reward_verified };

std::string to_string(Provenance p);

struct PreferencePair {
    std::uint64_t example_id = 0;
    lm::Tokens prompt;
    lm::Tokens chosen;    // y+, the teacher sample for pseudo pairs
    lm::Tokens rejected;  // y-
    Provenance provenance = Provenance::pseudo;
    std::optional<double> reward_plus;
    std::optional<double> reward_minus;
};

struct PromptItem {
    std::uint64_t id = 0;
    lm::Tokens prompt;
};

struct PairSet {
    std::vector<PreferencePair> pairs;  // sorted by example_id
    std::size_t dropped = 0;           // prompts where both samples were identical
};

// Per-prompt sampling seeds; both derive from seed ^ id.
std::uint64_t teacher_sample_seed(std::uint64_t seed, std::uint64_t id);
std::uint64_t student_sample_seed(std::uint64_t seed, std::uint64_t id);

// One teacher and one student sample per prompt at temperature gamma; the
// teacher sample is labeled chosen. Never looks at a reward model.
PairSet generate_pairs(const lm::ModelParams& teacher, const lm::ModelParams& student,
                       std::span<const PromptItem> prompts, double gamma, int max_output_len, std::uint64_t seed);

struct MixResult {
    std::vector<PreferencePair> pairs;
    std::size_t verified = 0;  // floor(ratio * N)
    std::size_t swapped = 0;
    std::size_t ties = 0;  // verified pairs with equal rewards, kept in pseudo order
};

// Re-ranks a seeded random subset of floor(ratio * N) pairs by reward so the
// higher-reward output is chosen, and marks them reward_verified.
MixResult mix_real_pairs(std::span<const PreferencePair> pairs, const lm::Vocabulary& vocab,
                         const eval::RewardModel& reward, double ratio, std::uint64_t seed);

// Percent of pairs whose teacher sample strictly out-scores the student
// sample. Only defined on pseudo pairs.
double teacher_student_win_rate(std::span<const PreferencePair> pairs, const lm::Vocabulary& vocab,
                                const eval::RewardModel& reward);

inline constexpr int kPairSchemaVersion = 1;

// JSON Lines: a header {"schema":"plad.pairs",...} then one object per pair
// with text fields. Outputs cut off at the length limit carry
// "chosen_terminated": false / "rejected_terminated": false.
void write_pairs_jsonl(std::ostream& out, const PairSet& set, const lm::Vocabulary& vocab,
                       const lm::ArtifactStamp& stamp);
PairSet read_pairs_jsonl(std::istream& in, const lm::Vocabulary& vocab, lm::ArtifactStamp* stamp = nullptr);

}  // namespace plad::preference
