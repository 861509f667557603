#include <sstream>

#include "doctest.h"
#include "plad/lm/inference.hpp"
#include "plad/preference/pairs.hpp"
#include "plad/train/supervised.hpp"

using namespace plad;
using lm::Tokens;
using preference::PreferencePair;
using preference::Provenance;

namespace {

lm::ArchConfig tiny_arch() { return lm::ArchConfig{1, 8, 2, 10, "learned"}; }

// Always continues with "c c c c <eos>".
lm::ModelParams forced_model(const lm::Vocabulary& v) {
    std::vector<train::LabeledExample> data;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) data.push_back({{a, b}, {2, 2, 2, 2, v.eos()}});
    train::TrainConfig cfg;
    cfg.learning_rate = 2e-2;
    cfg.epochs = 150;
    cfg.batch_size = 3;
    cfg.seed = 1;
    return train::sft_train(lm::init_model(tiny_arch(), v, 12), data, cfg).model;
}

std::vector<preference::PromptItem> prompts(int n) {
    std::vector<preference::PromptItem> out;
    for (int i = 0; i < n; ++i) out.push_back({static_cast<std::uint64_t>(100 + i), {i % 3, (i / 3) % 3}});
    return out;
}

struct ConstantReward final : eval::RewardModel {
    double score(std::string_view, std::string_view) const override { return 0.5; }
    std::string name() const override { return "constant"; }
};

struct LengthReward final : eval::RewardModel {
    double score(std::string_view, std::string_view y) const override { return static_cast<double>(y.size()); }
    std::string name() const override { return "length"; }
};

struct ExactReward final : eval::RewardModel {
    std::string good;
    explicit ExactReward(std::string g) : good(std::move(g)) {}
    double score(std::string_view, std::string_view y) const override { return y == good ? 1.0 : 0.0; }
    std::string name() const override { return "exact"; }
};

std::vector<PreferencePair> handmade_pairs(const lm::Vocabulary& v) {
    std::vector<PreferencePair> out;
    const Tokens shapes[] = {{0, v.eos()}, {0, 1, v.eos()}, {1, 1, 1, v.eos()}, {2, 1, 0, 1, 2, 1, v.eos()}, {0, 2, 1, 0, v.eos()}};
    for (std::uint64_t i = 0; i < 20; ++i) {
        PreferencePair p;
        p.example_id = i;
        p.prompt = {static_cast<int>(i % 3)};
        p.chosen = shapes[i % 5];
        p.rejected = shapes[(i * 3 + 1) % 5];
        if (p.chosen == p.rejected) p.rejected = {1, 2, 0, 1, 2, v.eos()};
        out.push_back(p);
    }
    return out;
}

std::string pair_bytes(const preference::PairSet& s, const lm::Vocabulary& v) {
    std::ostringstream out;
    preference::write_pairs_jsonl(out, s, v, {1, 2, ""});
    return out.str();
}

}  // namespace

TEST_CASE("same model on both sides drops some prompts and still labels the teacher sample") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto m = forced_model(v);
    const auto items = prompts(60);
    const auto set = preference::generate_pairs(m, m, items, 1.5, 6, 5);
    CHECK(set.dropped > 0);
    CHECK(set.dropped + set.pairs.size() == items.size());
    for (const auto& p : set.pairs) {
        const int limit = std::min(6, m.arch.max_len - static_cast<int>(p.prompt.size()));
        CHECK(p.chosen == lm::sample(m, p.prompt, 1.5, limit, preference::teacher_sample_seed(5, p.example_id)));
        CHECK(p.chosen != p.rejected);
        CHECK(p.provenance == Provenance::pseudo);
    }
}

TEST_CASE("forced teacher against a uniform student") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto teacher = forced_model(v);
    const auto student = lm::zero_model(tiny_arch(), v);
    const auto set = preference::generate_pairs(teacher, student, prompts(100), 0.7, 6, 9);
    CHECK(set.pairs.size() == 100);
    const Tokens forced = {2, 2, 2, 2, v.eos()};
    for (const auto& p : set.pairs) CHECK(p.chosen == forced);
    for (std::size_t i = 1; i < set.pairs.size(); ++i) CHECK(set.pairs[i - 1].example_id < set.pairs[i].example_id);
}

TEST_CASE("pair generation is reproducible") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto t = lm::init_model(tiny_arch(), v, 1);
    const auto s = lm::init_model(tiny_arch(), v, 2);
    const auto a = preference::generate_pairs(t, s, prompts(30), 0.7, 6, 4);
    const auto b = preference::generate_pairs(t, s, prompts(30), 0.7, 6, 4);
    CHECK(pair_bytes(a, v) == pair_bytes(b, v));
    CHECK(pair_bytes(a, v) != pair_bytes(preference::generate_pairs(t, s, prompts(30), 0.7, 6, 5), v));
}

TEST_CASE("pair generation input errors") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto t = lm::init_model(tiny_arch(), v, 1);
    CHECK_THROWS_AS(preference::generate_pairs(t, t, {}, 0.7, 6, 1), std::invalid_argument);
    const auto other = lm::init_model(tiny_arch(), lm::Vocabulary({"x", "y", "z"}), 1);
    CHECK_THROWS_AS(preference::generate_pairs(t, other, prompts(2), 0.7, 6, 1), std::invalid_argument);
}

TEST_CASE("ratio zero leaves pairs untouched") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto pairs = handmade_pairs(v);
    const auto mixed = preference::mix_real_pairs(pairs, v, LengthReward{}, 0.0, 3);
    CHECK(mixed.verified == 0);
    REQUIRE(mixed.pairs.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(mixed.pairs[i].chosen == pairs[i].chosen);
        CHECK(mixed.pairs[i].rejected == pairs[i].rejected);
        CHECK(mixed.pairs[i].provenance == Provenance::pseudo);
        CHECK_FALSE(mixed.pairs[i].reward_plus.has_value());
    }
}

TEST_CASE("ratio one with a longer-is-better reward") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto pairs = handmade_pairs(v);
    const auto mixed = preference::mix_real_pairs(pairs, v, LengthReward{}, 1.0, 3);
    CHECK(mixed.verified == pairs.size());
    CHECK(mixed.swapped > 0);
    for (const auto& p : mixed.pairs) {
        CHECK(p.chosen.size() > p.rejected.size());
        CHECK(p.provenance == Provenance::reward_verified);
        CHECK(*p.reward_plus >= *p.reward_minus);
    }
    const auto again = preference::mix_real_pairs(mixed.pairs, v, LengthReward{}, 1.0, 8);
    CHECK(again.swapped == 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(again.pairs[i].chosen == mixed.pairs[i].chosen);
}

TEST_CASE("swaps are bounded by the verified count") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto pairs = handmade_pairs(v);
    for (double ratio : {0.1, 0.25, 0.5, 0.77}) {
        const auto mixed = preference::mix_real_pairs(pairs, v, LengthReward{}, ratio, 11);
        CHECK(mixed.verified == static_cast<std::size_t>(ratio * 20.0));
        CHECK(mixed.swapped <= mixed.verified);
        std::size_t verified = 0;
        for (const auto& p : mixed.pairs) verified += p.provenance == Provenance::reward_verified;
        CHECK(verified == mixed.verified);
    }
    CHECK_THROWS(preference::mix_real_pairs(pairs, v, LengthReward{}, 1.5, 1));
}

TEST_CASE("ties keep the pseudo order") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto pairs = handmade_pairs(v);
    const auto mixed = preference::mix_real_pairs(pairs, v, ConstantReward{}, 1.0, 2);
    CHECK(mixed.ties == pairs.size());
    CHECK(mixed.swapped == 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(mixed.pairs[i].chosen == pairs[i].chosen);
}

TEST_CASE("teacher-student win rate") {
    lm::Vocabulary v({"a", "b", "c"});
    auto pairs = handmade_pairs(v);
    CHECK(preference::teacher_student_win_rate(pairs, v, ConstantReward{}) == 0.0);
    for (auto& p : pairs) p.chosen = {0, 0, 0, v.eos()};
    CHECK(preference::teacher_student_win_rate(pairs, v, ExactReward("a a a")) == 100.0);
    pairs.resize(4);
    pairs[0].chosen = {1, v.eos()};
    CHECK(preference::teacher_student_win_rate(pairs, v, ExactReward("a a a")) == 75.0);
    CHECK_THROWS(preference::teacher_student_win_rate(std::vector<PreferencePair>{}, v, ConstantReward{}));
}

TEST_CASE("pair jsonl round trip") {
    lm::Vocabulary v({"a", "b", "c"});
    preference::PairSet set;
    set.pairs = preference::mix_real_pairs(handmade_pairs(v), v, LengthReward{}, 0.5, 1).pairs;
    set.pairs[0].rejected = {1, 1, 1};  // cut off without <eos>
    set.pairs[1].chosen = {v.eos()};    // empty output
    set.dropped = 3;
    std::stringstream buf(pair_bytes(set, v));
    lm::ArtifactStamp stamp;
    const auto back = preference::read_pairs_jsonl(buf, v, &stamp);
    CHECK(stamp.config_hash == 1);
    CHECK(stamp.seed == 2);
    CHECK(back.dropped == 3);
    REQUIRE(back.pairs.size() == set.pairs.size());
    for (std::size_t i = 0; i < back.pairs.size(); ++i) {
        CHECK(back.pairs[i].example_id == set.pairs[i].example_id);
        CHECK(back.pairs[i].prompt == set.pairs[i].prompt);
        CHECK(back.pairs[i].chosen == set.pairs[i].chosen);
        CHECK(back.pairs[i].rejected == set.pairs[i].rejected);
        CHECK(back.pairs[i].provenance == set.pairs[i].provenance);
        CHECK(back.pairs[i].reward_plus == set.pairs[i].reward_plus);
    }
    std::stringstream bad("{\"schema\":\"plad.pairs\",\"version\":1,\"config_hash\":0,\"seed\":0}\n"
                          "{\"example_id\":1,\"prompt\":\"a\",\"chosen\":\"b\",\"rejected\":\"b\",\"provenance\":\"pseudo\"}\n");
    CHECK_THROWS(preference::read_pairs_jsonl(bad, v));
}
