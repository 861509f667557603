#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "plad/eval/reward.hpp"
#include "plad/lm/vocabulary.hpp"

namespace plad::tasks {

// Synthetic extractive summarization: a prompt interleaves key symbols (K*)
// with noise symbols (n*) and ends with the separator "="; the summary is
// the in-order subsequence of keys.
struct TaskSpec {
    int n_key_symbols = 8;
    int n_noise_symbols = 8;
    int prompt_min_len = 6;   // symbols before the separator
    int prompt_max_len = 12;
    double noise_rate = 0.5;  // probability that a prompt position is noise
    // Probability that a stored reference carries one random edit, so
    // references are good but not reward-optimal.
    double reference_corruption = 0.0;
    int train_size = 512;
    int distill_size = 512;
    int dev_size = 128;
    int test_size = 256;
    std::uint64_t seed = 0;

    void validate(int context_window) const;
    // Longest reference a prompt can have, plus the edit slack.
    int max_target_len() const { return prompt_max_len + 1; }
};

inline constexpr const char* kSeparator = "=";
inline constexpr int kCorpusSchemaVersion = 1;

struct Example {
    std::uint64_t id = 0;
    std::string prompt;  // whitespace-separated symbols, ending with "="
    std::string target;
};

struct Corpus {
    std::vector<Example> train;    // D0, labeled
    std::vector<Example> distill;  // D, only prompts are used downstream
    std::vector<Example> dev;
    std::vector<Example> test;
};

lm::Vocabulary task_vocabulary(const TaskSpec& spec);
bool is_key_symbol(std::string_view symbol);

// In-order key symbols of a prompt.
std::vector<std::string> key_projection(std::string_view prompt);

Corpus generate_corpus(const TaskSpec& spec);

// F1 of the longest common subsequence between the response and the prompt's
// key projection, times min(1, |keys| / |response|).
class OracleReward final : public eval::RewardModel {
public:
    double score(std::string_view prompt, std::string_view response) const override;
    std::string name() const override { return "oracle_key_f1_brevity"; }
};

// JSON Lines: a header object {"schema":"plad.corpus","version",...} then one
// {"id","prompt","target"} object per line.
struct FileStamp {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

void write_examples_jsonl(std::ostream& out, const std::vector<Example>& examples, const FileStamp& stamp);
std::vector<Example> read_examples_jsonl(std::istream& in, FileStamp* stamp = nullptr);

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus, const FileStamp& stamp);
Corpus load_corpus(const std::filesystem::path& dir, FileStamp* stamp = nullptr);

std::vector<std::string> split_words(std::string_view text);

}  // namespace plad::tasks
