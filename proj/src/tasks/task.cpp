#include "plad/tasks/task.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "plad/numerics/random.hpp"

namespace plad::tasks {

using nlohmann::json;

namespace {

std::string key_name(int i) { return "K" + std::to_string(i); }
std::string noise_name(int i) { return "n" + std::to_string(i); }

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// One insertion, deletion or substitution; never leaves the target empty.
void corrupt(std::vector<std::string>& target, int n_keys, num::Rng& rng) {
    const auto random_key = [&] { return key_name(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_keys)))); };
    int kind = static_cast<int>(rng.below(3));
    if (kind == 1 && target.size() < 2) kind = 0;
    if (kind == 0) {
        const auto at = rng.below(target.size() + 1);
        target.insert(target.begin() + static_cast<std::ptrdiff_t>(at), random_key());
    } else if (kind == 1) {
        target.erase(target.begin() + static_cast<std::ptrdiff_t>(rng.below(target.size())));
    } else {
        auto& slot = target[rng.below(target.size())];
        std::string repl = slot;
        if (n_keys < 2) {
            target.push_back(random_key());
            return;
        }
        while (repl == slot) repl = random_key();
        slot = repl;
    }
}

}  // namespace

void TaskSpec::validate(int context_window) const {
    if (n_key_symbols < 1 || n_noise_symbols < 0) throw std::invalid_argument("task: need at least one key symbol");
    if (prompt_min_len < 1 || prompt_max_len < prompt_min_len)
        throw std::invalid_argument("task: bad prompt length range");
    if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw std::invalid_argument("task: noise_rate must be in [0, 1)");
    if (n_noise_symbols == 0 && noise_rate > 0.0)
        throw std::invalid_argument("task: noise_rate > 0 needs noise symbols");
    if (!(reference_corruption >= 0.0 && reference_corruption <= 1.0))
        throw std::invalid_argument("task: reference_corruption must be in [0, 1]");
    if (train_size < 1 || distill_size < 1 || dev_size < 1 || test_size < 1)
        throw std::invalid_argument("task: every split needs at least one example");
    // <bos> + prompt + separator + target + <eos>, minus the last input.
    if (context_window > 0 && 1 + prompt_max_len + 1 + max_target_len() > context_window)
        throw std::invalid_argument("task: prompt and target do not fit the context window");
}

lm::Vocabulary task_vocabulary(const TaskSpec& spec) {
    std::vector<std::string> symbols;
    for (int i = 0; i < spec.n_key_symbols; ++i) symbols.push_back(key_name(i));
    for (int i = 0; i < spec.n_noise_symbols; ++i) symbols.push_back(noise_name(i));
    symbols.emplace_back(kSeparator);
    return lm::Vocabulary(std::move(symbols));
}

bool is_key_symbol(std::string_view s) {
    return s.size() > 1 && s[0] == 'K' && std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<std::string> key_projection(std::string_view prompt) {
    auto words = split_words(prompt);
    std::erase_if(words, [](const std::string& w) { return !is_key_symbol(w); });
    return words;
}

Corpus generate_corpus(const TaskSpec& spec) {
    spec.validate(0);
    num::Rng rng(num::mix_seed(spec.seed ^ 0x636f72707573ull));
    std::unordered_set<std::string> seen;
    const int sizes[4] = {spec.train_size, spec.distill_size, spec.dev_size, spec.test_size};
    Corpus corpus;
    std::vector<Example>* splits[4] = {&corpus.train, &corpus.distill, &corpus.dev, &corpus.test};
    std::uint64_t next_id = 0;
    const int span = spec.prompt_max_len - spec.prompt_min_len + 1;
    for (int s = 0; s < 4; ++s) {
        for (int n = 0; n < sizes[s]; ++n) {
            std::vector<std::string> words;
            std::string prompt;
            for (int attempt = 0;; ++attempt) {
                if (attempt > 10000) throw std::invalid_argument("task: cannot draw enough distinct prompts");
                const int len = spec.prompt_min_len + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
                words.clear();
                bool has_key = false;
                for (int i = 0; i < len; ++i) {
                    if (rng.uniform() < spec.noise_rate) {
                        words.push_back(noise_name(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_noise_symbols)))));
                    } else {
                        words.push_back(key_name(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_key_symbols)))));
                        has_key = true;
                    }
                }
                if (!has_key) continue;
                words.emplace_back(kSeparator);
                prompt = join(words);
                if (seen.insert(prompt).second) break;
            }
            auto target = key_projection(prompt);
            if (rng.uniform() < spec.reference_corruption) corrupt(target, spec.n_key_symbols, rng);
            splits[s]->push_back({next_id++, std::move(prompt), join(target)});
        }
    }
    return corpus;
}

double OracleReward::score(std::string_view prompt, std::string_view response) const {
    const auto keys = key_projection(prompt);
    const auto y = split_words(response);
    if (keys.empty()) return y.empty() ? 1.0 : 0.0;
    if (y.empty()) return 0.0;
    const auto lcs = static_cast<double>(lcs_length(y, keys));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(y.size());
    const double r = lcs / static_cast<double>(keys.size());
    const double brevity = std::min(1.0, static_cast<double>(keys.size()) / static_cast<double>(y.size()));
    return 2.0 * p * r / (p + r) * brevity;
}

void write_examples_jsonl(std::ostream& out, const std::vector<Example>& examples, const FileStamp& stamp) {
    out << json{{"schema", "plad.corpus"},
                {"version", kCorpusSchemaVersion},
                {"config_hash", stamp.config_hash},
                {"seed", stamp.seed}}
               .dump()
        << '\n';
    for (const auto& e : examples) out << json{{"id", e.id}, {"prompt", e.prompt}, {"target", e.target}}.dump() << '\n';
}

std::vector<Example> read_examples_jsonl(std::istream& in, FileStamp* stamp) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("corpus: empty file");
    const auto header = json::parse(line);
    if (header.value("schema", "") != "plad.corpus") throw std::runtime_error("corpus: missing schema header");
    if (header.value("version", -1) != kCorpusSchemaVersion)
        throw std::runtime_error("corpus: unsupported version " + header.value("version", json(-1)).dump());
    if (stamp) *stamp = {header.at("config_hash").get<std::uint64_t>(), header.at("seed").get<std::uint64_t>()};
    std::vector<Example> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            out.push_back({j.at("id").get<std::uint64_t>(), j.at("prompt").get<std::string>(), j.at("target").get<std::string>()});
        } catch (const json::exception& e) {
            throw std::runtime_error("corpus: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

namespace {
constexpr const char* kSplitNames[4] = {"train", "distill", "dev", "test"};
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus, const FileStamp& stamp) {
    std::filesystem::create_directories(dir);
    const std::vector<Example>* splits[4] = {&corpus.train, &corpus.distill, &corpus.dev, &corpus.test};
    for (int s = 0; s < 4; ++s) {
        std::ofstream f(dir / (std::string(kSplitNames[s]) + ".jsonl"), std::ios::binary);
        if (!f) throw std::runtime_error("corpus: cannot write " + (dir / kSplitNames[s]).string());
        write_examples_jsonl(f, *splits[s], stamp);
    }
}

Corpus load_corpus(const std::filesystem::path& dir, FileStamp* stamp) {
    Corpus corpus;
    std::vector<Example>* splits[4] = {&corpus.train, &corpus.distill, &corpus.dev, &corpus.test};
    for (int s = 0; s < 4; ++s) {
        const auto path = dir / (std::string(kSplitNames[s]) + ".jsonl");
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("corpus: cannot open " + path.string());
        FileStamp st;
        *splits[s] = read_examples_jsonl(f, &st);
        if (stamp) *stamp = st;
    }
    return corpus;
}

}  // namespace plad::tasks
