#include "plad/preference/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "plad/lm/inference.hpp"
#include "plad/numerics/random.hpp"

namespace plad::preference {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTeacherStream = 0x7465616368ull;
constexpr std::uint64_t kStudentStream = 0x73747564ull;

std::string text_of(const lm::Vocabulary& vocab, const lm::Tokens& ids) { return vocab.decode(ids); }

std::string prompt_text(const lm::Vocabulary& vocab, const lm::Tokens& ids) {
    std::string out;
    for (int id : ids) {
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

bool terminated(const lm::Vocabulary& vocab, const lm::Tokens& y) { return !y.empty() && y.back() == vocab.eos(); }

lm::Tokens output_tokens(const lm::Vocabulary& vocab, const std::string& text, bool is_terminated) {
    auto ids = vocab.encode(text);
    if (is_terminated) ids.push_back(vocab.eos());
    return ids;
}

}  // namespace

std::uint64_t teacher_sample_seed(std::uint64_t seed, std::uint64_t id) {
    return num::mix_seed(seed ^ id ^ kTeacherStream);
}
std::uint64_t student_sample_seed(std::uint64_t seed, std::uint64_t id) {
    return num::mix_seed(seed ^ id ^ kStudentStream);
}

std::string to_string(Provenance p) { return p == Provenance::pseudo ? "pseudo" : "reward_verified"; }

PairSet generate_pairs(const lm::ModelParams& teacher, const lm::ModelParams& student,
                       std::span<const PromptItem> prompts, double gamma, int max_output_len, std::uint64_t seed) {
    if (!(teacher.vocab == student.vocab)) throw std::invalid_argument("teacher and student vocabularies differ");
    if (prompts.empty()) throw std::invalid_argument("generate_pairs needs a non-empty distillation set");
    if (!(gamma > 0.0)) throw std::invalid_argument("sampling temperature must be positive");

    const auto n = static_cast<std::ptrdiff_t>(prompts.size());
    std::vector<std::optional<PreferencePair>> slots(prompts.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            const auto& item = prompts[static_cast<std::size_t>(i)];
            const int window = std::min(teacher.arch.max_len, student.arch.max_len) - static_cast<int>(item.prompt.size());
            const int limit = std::min(max_output_len, window);
            auto yt = lm::sample(teacher, item.prompt, gamma, limit, teacher_sample_seed(seed, item.id));
            auto ys = lm::sample(student, item.prompt, gamma, limit, student_sample_seed(seed, item.id));
            if (yt != ys) {
                PreferencePair p;
                p.example_id = item.id;
                p.prompt = item.prompt;
                p.chosen = std::move(yt);
                p.rejected = std::move(ys);
                slots[static_cast<std::size_t>(i)] = std::move(p);
            }
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    PairSet out;
    for (auto& s : slots) {
        if (s) out.pairs.push_back(std::move(*s));
        else ++out.dropped;
    }
    std::stable_sort(out.pairs.begin(), out.pairs.end(),
                     [](const PreferencePair& a, const PreferencePair& b) { return a.example_id < b.example_id; });
    return out;
}

MixResult mix_real_pairs(std::span<const PreferencePair> pairs, const lm::Vocabulary& vocab,
                         const eval::RewardModel& reward, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("ratio must be in [0, 1]");
    MixResult out;
    out.pairs.assign(pairs.begin(), pairs.end());
    out.verified = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pairs.size())));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    num::Rng rng(num::mix_seed(seed ^ 0x6d6978ull));
    num::shuffle(order, rng);
    for (std::size_t k = 0; k < out.verified; ++k) {
        auto& p = out.pairs[order[k]];
        const std::string x = prompt_text(vocab, p.prompt);
        double rp = reward.score(x, text_of(vocab, p.chosen));
        double rm = reward.score(x, text_of(vocab, p.rejected));
        if (rm > rp) {
            std::swap(p.chosen, p.rejected);
            std::swap(rp, rm);
            ++out.swapped;
        } else if (rm == rp) {
            ++out.ties;
        }
        p.provenance = Provenance::reward_verified;
        p.reward_plus = rp;
        p.reward_minus = rm;
    }
    return out;
}

double teacher_student_win_rate(std::span<const PreferencePair> pairs, const lm::Vocabulary& vocab,
                                const eval::RewardModel& reward) {
    if (pairs.empty()) throw std::invalid_argument("teacher_student_win_rate needs at least one pair");
    std::size_t wins = 0;
    for (const auto& p : pairs) {
        if (p.provenance != Provenance::pseudo)
            throw std::invalid_argument("teacher_student_win_rate is defined on pseudo pairs only");
        const std::string x = prompt_text(vocab, p.prompt);
        if (reward.score(x, text_of(vocab, p.chosen)) > reward.score(x, text_of(vocab, p.rejected))) ++wins;
    }
    return 100.0 * static_cast<double>(wins) / static_cast<double>(pairs.size());
}

void write_pairs_jsonl(std::ostream& out, const PairSet& set, const lm::Vocabulary& vocab,
                       const lm::ArtifactStamp& stamp) {
    out << json{{"schema", "plad.pairs"},
                {"version", kPairSchemaVersion},
                {"config_hash", stamp.config_hash},
                {"seed", stamp.seed},
                {"dropped", set.dropped}}
               .dump()
        << '\n';
    for (const auto& p : set.pairs) {
        json j = {{"example_id", p.example_id},
                  {"prompt", prompt_text(vocab, p.prompt)},
                  {"chosen", text_of(vocab, p.chosen)},
                  {"rejected", text_of(vocab, p.rejected)},
                  {"provenance", to_string(p.provenance)}};
        if (!terminated(vocab, p.chosen)) j["chosen_terminated"] = false;
        if (!terminated(vocab, p.rejected)) j["rejected_terminated"] = false;
        if (p.reward_plus) j["reward_plus"] = *p.reward_plus;
        if (p.reward_minus) j["reward_minus"] = *p.reward_minus;
        out << j.dump() << '\n';
    }
}

PairSet read_pairs_jsonl(std::istream& in, const lm::Vocabulary& vocab, lm::ArtifactStamp* stamp) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("pairs: empty file");
    const auto header = json::parse(line);
    if (header.value("schema", "") != "plad.pairs") throw std::runtime_error("pairs: missing schema header");
    if (header.value("version", -1) != kPairSchemaVersion) throw std::runtime_error("pairs: unsupported version");
    if (stamp) {
        stamp->config_hash = header.at("config_hash").get<std::uint64_t>();
        stamp->seed = header.at("seed").get<std::uint64_t>();
    }
    PairSet set;
    set.dropped = header.value("dropped", std::size_t{0});
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            PreferencePair p;
            p.example_id = j.at("example_id").get<std::uint64_t>();
            p.prompt = vocab.encode(j.at("prompt").get<std::string>());
            p.chosen = output_tokens(vocab, j.at("chosen").get<std::string>(), j.value("chosen_terminated", true));
            p.rejected = output_tokens(vocab, j.at("rejected").get<std::string>(), j.value("rejected_terminated", true));
            const auto prov = j.at("provenance").get<std::string>();
            if (prov == "pseudo") p.provenance = Provenance::pseudo;
            else if (prov == "reward_verified") p.provenance = Provenance::reward_verified;
            else throw std::runtime_error("unknown provenance '" + prov + "'");
            if (j.contains("reward_plus")) p.reward_plus = j["reward_plus"].get<double>();
            if (j.contains("reward_minus")) p.reward_minus = j["reward_minus"].get<double>();
            if (p.chosen == p.rejected) throw std::runtime_error("chosen and rejected are identical");
            set.pairs.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw std::runtime_error("pairs: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return set;
}

}  // namespace plad::preference
