#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "plad/lm/checkpoint.hpp"
#include "plad/lm/inference.hpp"
#include "plad/train/supervised.hpp"
#include "support/enumerate.hpp"

using namespace plad;
using lm::Tokens;

namespace {

lm::ArchConfig tiny_arch(int max_len = 8) { return lm::ArchConfig{1, 8, 2, max_len, "learned"}; }

lm::ModelParams random_model(const lm::Vocabulary& v, std::uint64_t seed, int max_len = 8) {
    auto m = lm::init_model(tiny_arch(max_len), v, seed);
    // Larger embeddings give peaked, non-uniform distributions.
    for (double& x : m.tensors[lm::layout::kTokEmb].values()) x *= 10.0;
    return m;
}

// "a" is always followed by "b".
lm::ModelParams grammar_model(const lm::Vocabulary& v) {
    std::vector<train::LabeledExample> data = {{{v.id("a")}, {v.id("b"), v.eos()}}};
    train::TrainConfig cfg;
    cfg.learning_rate = 3e-2;
    cfg.epochs = 150;
    cfg.batch_size = 1;
    cfg.seed = 1;
    return train::sft_train(lm::init_model(tiny_arch(), v, 4), data, cfg).model;
}

}  // namespace

TEST_CASE("zero weights give a uniform next-token distribution") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto m = lm::zero_model(tiny_arch(), v);
    const Tokens x = {0, 1};
    for (const Tokens& prefix : {Tokens{}, Tokens{2}, Tokens{2, 0, 1}}) {
        const auto p = lm::next_token_distribution(m, x, prefix, 0.7);
        REQUIRE(p.size() == 6);
        for (double q : p) CHECK(q == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    }
}

TEST_CASE("temperature does not change the most likely token") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_model(v, seed);
        const Tokens x = {static_cast<int>(seed % 4)};
        const auto p1 = lm::next_token_distribution(m, x, {}, 1.0);
        const auto p2 = lm::next_token_distribution(m, x, {}, 0.5);
        CHECK(std::max_element(p1.begin(), p1.end()) - p1.begin() == std::max_element(p2.begin(), p2.end()) - p2.begin());
    }
}

TEST_CASE("context overflow is reported") {
    lm::Vocabulary v({"a"});
    const auto m = lm::zero_model(tiny_arch(4), v);
    CHECK_NOTHROW(lm::next_token_distribution(m, Tokens{0, 0}, Tokens{0}, 1.0));
    CHECK_THROWS_AS(lm::next_token_distribution(m, Tokens{0, 0}, Tokens{0, 0}, 1.0), lm::ContextOverflow);
    CHECK_THROWS_AS(lm::hidden_embeddings(m, Tokens{0, 0, 0}, Tokens{0, 0}), lm::ContextOverflow);
}

TEST_CASE("sequence log-likelihood under a uniform model") {
    lm::Vocabulary v({"a"});  // M = 4
    const auto m = lm::zero_model(tiny_arch(), v);
    const Tokens y = {0, 0, v.eos()};
    CHECK(lm::sequence_log_likelihood(m, Tokens{0}, y, false) == doctest::Approx(3.0 * std::log(0.25)).epsilon(1e-14));
    CHECK(lm::sequence_log_likelihood(m, Tokens{0}, y, true) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
    CHECK_THROWS_AS(lm::sequence_log_likelihood(m, Tokens{0}, Tokens{}, false), std::invalid_argument);
}

TEST_CASE("probability mass over all terminated sequences is one") {
    for (auto symbols : {std::vector<std::string>{}, std::vector<std::string>{"a"}}) {
        lm::Vocabulary v(symbols);
        const int M = v.size();
        const auto seqs = testing::terminated_sequences(M, v.eos(), 3);
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto m = random_model(v, seed);
            for (const Tokens& x : {Tokens{}, Tokens{v.pad(), v.bos()}}) {
                double total = 0.0;
                for (const auto& y : seqs) total += std::exp(lm::sequence_log_likelihood(m, x, y, false));
                CHECK(std::abs(total - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("a trained two-token grammar is learned") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto m = grammar_model(v);
    const Tokens x = {v.id("a")};
    const auto p = lm::next_token_distribution(m, x, {}, 1.0);
    CHECK(p[static_cast<std::size_t>(v.id("b"))] > 0.9);

    const Tokens forced = {v.id("b"), v.eos()};
    CHECK(lm::greedy_decode(m, x, 5) == forced);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) hits += lm::sample(m, x, 0.1, 5, seed) == forced;
    CHECK(hits == 100);
}

TEST_CASE("sampling is deterministic per seed") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto m = random_model(v, 9);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CHECK(lm::sample(m, Tokens{0, 1}, 0.7, 5, seed) == lm::sample(m, Tokens{0, 1}, 0.7, 5, seed));
    }
}

TEST_CASE("uniform model first-token frequencies match the exact 1/M") {
    lm::Vocabulary v({"a"});  // M = 4
    const auto m = lm::zero_model(tiny_arch(), v);
    std::map<int, int> counts;
    const int n = 100000;
    for (int s = 0; s < n; ++s) ++counts[lm::sample(m, Tokens{}, 1.0, 2, static_cast<std::uint64_t>(s))[0]];
    for (int t = 0; t < 4; ++t) CHECK(std::abs(counts[t] / double(n) - 0.25) <= 0.01);
}

TEST_CASE("greedy decoding") {
    lm::Vocabulary v({"a", "b"});
    const auto zero = lm::zero_model(tiny_arch(), v);
    CHECK(lm::greedy_decode(zero, Tokens{1}, 4) == Tokens{0, 0, 0, 0});

    // Near-zero temperature sampling reduces to argmax when argmaxes are unique.
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = random_model(v, 100 + seed);
        CHECK(lm::greedy_decode(m, Tokens{1, 0}, 5) == lm::sample(m, Tokens{1, 0}, 1e-4, 5, seed));
    }
}

TEST_CASE("hidden embeddings are unit vectors, one per token") {
    lm::Vocabulary v({"a", "b", "c"});
    const auto m = random_model(v, 3);
    const Tokens seq = {0, 2, 1, v.eos()};
    const Tokens ctx = {1, 1};
    const auto e = lm::hidden_embeddings(m, seq, ctx);
    REQUIRE(e.size() == seq.size());
    for (const auto& vec : e) {
        double n = 0.0, self = 0.0;
        for (double x : vec) n += x * x;
        for (double x : vec) self += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
        CHECK(self == doctest::Approx(1.0));
    }
    CHECK(lm::hidden_embeddings(m, seq, ctx) == e);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    lm::Vocabulary v({"x", "y", "z"});
    auto m = random_model(v, 21);
    m.stamp = {0xDEADBEEFCAFEull, 42, "student_sft"};
    std::stringstream buf;
    lm::write_checkpoint(buf, m);
    const auto back = lm::read_checkpoint(buf);
    CHECK(back.arch == m.arch);
    CHECK(back.vocab == m.vocab);
    CHECK(back.stamp.config_hash == m.stamp.config_hash);
    CHECK(back.stamp.seed == 42);
    CHECK(back.stamp.tag == "student_sft");
    REQUIRE(back.tensors.size() == m.tensors.size());
    for (std::size_t i = 0; i < m.tensors.size(); ++i) {
        CHECK(back.tensors[i].shape() == m.tensors[i].shape());
        CHECK(std::equal(back.tensors[i].values().begin(), back.tensors[i].values().end(),
                         m.tensors[i].values().begin()));
    }
}

TEST_CASE("corrupt checkpoints are rejected") {
    std::stringstream bad("NOTACKPT....");
    CHECK_THROWS_AS(lm::read_checkpoint(bad), lm::CheckpointError);

    lm::Vocabulary v({"x"});
    std::stringstream buf;
    lm::write_checkpoint(buf, lm::zero_model(tiny_arch(), v));
    std::string bytes = buf.str();
    bytes.resize(bytes.size() / 2);
    std::stringstream truncated(bytes);
    CHECK_THROWS_AS(lm::read_checkpoint(truncated), lm::CheckpointError);
}

TEST_CASE("vocabulary layout and codec") {
    lm::Vocabulary v({"K1", "n2"});
    CHECK(v.size() == 5);
    CHECK(v.id("K1") == 0);
    CHECK(v.pad() == 2);
    CHECK(v.bos() == 3);
    CHECK(v.eos() == 4);
    CHECK(v.encode("K1 n2  K1") == Tokens{0, 1, 0});
    CHECK(v.decode(Tokens{0, 1, v.eos(), 0}) == "K1 n2");
    CHECK_THROWS_AS(v.encode("zz"), std::invalid_argument);
    CHECK_THROWS_AS(lm::Vocabulary({"a", "a"}), std::invalid_argument);
}
