#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "plad/eval/report.hpp"
#include "plad/numerics/random.hpp"

using namespace plad;

namespace {

struct LengthReward final : eval::RewardModel {
    double score(std::string_view, std::string_view y) const override { return static_cast<double>(eval::word_count(y)); }
    std::string name() const override { return "length"; }
};

// Prefers "good" outputs; the prompt says which bucket the example is in.
struct BucketFavoring final : eval::RewardModel {
    double score(std::string_view, std::string_view y) const override {
        return y.starts_with("good") ? 1.0 : 0.5;
    }
    std::string name() const override { return "bucket"; }
};

std::string words(int n, const std::string& first = "w") {
    std::string s = first;
    for (int i = 1; i < n; ++i) s += " w";
    return s;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

TEST_CASE("rouge fixtures") {
    struct Fixture {
        const char* cand;
        const char* ref;
        double r1, r2, rl;
    };
    const Fixture fixtures[] = {
        {"the cat sat", "the cat sat", 100.0, 100.0, 100.0},
        {"the cat sat", "the cat ran", 66.67, 50.0, 66.67},
        {"red green", "blue yellow", 0.0, 0.0, 0.0},
        {"the the cat", "the cat the dog", 85.71, 40.0, 57.14},
        {"A B C D E", "a c e b d", 100.0, 0.0, 60.0},
    };
    for (const auto& f : fixtures) {
        CAPTURE(f.cand);
        CHECK(round2(eval::rouge_n(f.cand, f.ref, 1)) == f.r1);
        CHECK(round2(eval::rouge_n(f.cand, f.ref, 2)) == f.r2);
        CHECK(round2(eval::rouge_l(f.cand, f.ref)) == f.rl);
    }
    CHECK(eval::rouge_n("", "a b", 1) == 0.0);
    CHECK(eval::rouge_l("a b", "") == 0.0);
    CHECK_THROWS(eval::rouge_n("a", "a", 0));
}

TEST_CASE("rouge-1 and rouge-l are symmetric") {
    num::Rng rng(2);
    const char* vocab[] = {"a", "b", "c", "d", "e"};
    for (int t = 0; t < 200; ++t) {
        std::string x, y;
        for (int i = 0, n = 1 + static_cast<int>(rng.below(8)); i < n; ++i) x += std::string(i ? " " : "") + vocab[rng.below(5)];
        for (int i = 0, n = 1 + static_cast<int>(rng.below(8)); i < n; ++i) y += std::string(i ? " " : "") + vocab[rng.below(5)];
        CHECK(eval::rouge_n(x, y, 1) == doctest::Approx(eval::rouge_n(y, x, 1)).epsilon(1e-12));
        CHECK(eval::rouge_l(x, y) == doctest::Approx(eval::rouge_l(y, x)).epsilon(1e-12));
        CHECK(eval::rouge_n(x, y, 2) >= 0.0);
        CHECK(eval::rouge_n(x, y, 2) <= 100.0);
    }
}

TEST_CASE("win rate counting") {
    const LengthReward r;
    const std::vector<std::string> prompts(10, "p");
    std::vector<std::string> targets(10, "a b");
    CHECK(eval::win_rate(targets, targets, prompts, r) == 0.0);
    std::vector<std::string> longer(10, "a b c");
    CHECK(eval::win_rate(longer, targets, prompts, r) == 100.0);
    std::vector<std::string> mixed(10, "a");
    mixed[0] = mixed[3] = mixed[7] = "a b c d";
    mixed[5] = "x y";  // tie
    CHECK(eval::win_rate(mixed, targets, prompts, r) == 30.0);
    CHECK_THROWS(eval::win_rate(std::vector<std::string>(3, "a"), targets, prompts, r));
}

TEST_CASE("length buckets") {
    const BucketFavoring r;
    std::vector<std::string> method, initial, targets, prompts;
    const int lengths[] = {3, 8, 12, 15, 22, 25, 28, 21, 29, 35, 45, 50};
    for (int len : lengths) {
        const bool favored = len > 20 && len <= 30;
        method.push_back(words(len, favored ? "good" : "w"));
        initial.push_back(words(len));
        targets.push_back("t");
        prompts.push_back("p");
    }
    const auto rows = eval::length_bucketed_delta_win_rate(method, initial, targets, prompts, r);
    REQUIRE(rows.size() == 5);
    std::size_t total = 0;
    for (const auto& row : rows) total += row.count;
    CHECK(total == method.size());
    CHECK(rows[2].lo == 20.0);
    CHECK(rows[2].count == 5);
    CHECK_FALSE(rows[2].low_support);
    CHECK(rows[2].delta == 100.0);
    for (std::size_t k : {0u, 1u, 3u, 4u}) {
        CHECK(rows[k].delta == 0.0);
        CHECK(rows[k].low_support);
    }
    CHECK(std::isinf(rows[4].hi));
    CHECK(rows[4].count == 2);

    const auto same = eval::length_bucketed_delta_win_rate(initial, initial, targets, prompts, r);
    for (const auto& row : same) CHECK(row.delta == 0.0);
}

TEST_CASE("reward judge") {
    const LengthReward r;
    const eval::RewardJudge j(r);
    CHECK(j.judge("a b", "a", "p") == eval::Preference::a);
    CHECK(j.judge("a", "a b", "p") == eval::Preference::b);
    CHECK(j.judge("a", "b", "p") == eval::Preference::tie);
    num::Rng rng(4);
    std::vector<std::string> outs, tgts;
    for (int i = 0; i < 50; ++i) {
        outs.push_back(words(1 + static_cast<int>(rng.below(5))));
        tgts.push_back(words(1 + static_cast<int>(rng.below(5))));
    }
    const std::vector<std::string> prompts(50, "p");
    int wins = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const auto ab = j.judge(outs[i], tgts[i], "p");
        const auto ba = j.judge(tgts[i], outs[i], "p");
        CHECK((ab == eval::Preference::a) == (ba == eval::Preference::b));
        CHECK((ab == eval::Preference::tie) == (ba == eval::Preference::tie));
        wins += ab == eval::Preference::a;
    }
    CHECK(eval::win_rate(outs, tgts, prompts, r) == doctest::Approx(2.0 * wins));
}

TEST_CASE("fraction subsets are nested and sized") {
    const auto a = eval::fraction_subset(200, 0.05, 3);
    const auto b = eval::fraction_subset(200, 0.5, 3);
    const auto c = eval::fraction_subset(200, 1.0, 3);
    CHECK(a.size() == 10);
    CHECK(b.size() == 100);
    CHECK(std::set<std::size_t>(c.begin(), c.end()).size() == 200);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(eval::fraction_subset(7, 0.01, 1).size() == 1);
    CHECK_THROWS(eval::fraction_subset(10, 0.0, 1));
}

TEST_CASE("scaling curve aggregates per-seed runs") {
    const std::vector<double> fractions = {0.05, 0.25, 0.5, 1.0};
    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    const eval::ScalingRun run = [](double f, std::uint64_t s) { return 10.0 * f + static_cast<double>(s); };
    const auto a = eval::scaling_curve(fractions, seeds, run);
    const auto b = eval::scaling_curve(fractions, seeds, run);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].per_seed == b[i].per_seed);
        CHECK(a[i].mean_win_rate == doctest::Approx(10.0 * fractions[i] + 2.0));
        CHECK(a[i].stddev == doctest::Approx(1.0));
    }
    const std::vector<double> unsorted = {0.5, 0.25};
    CHECK_THROWS(eval::scaling_curve(unsorted, seeds, run));
    const std::vector<double> zero = {0.0, 1.0};
    CHECK_THROWS(eval::scaling_curve(zero, seeds, run));
}

TEST_CASE("spearman") {
    const std::vector<double> x = {1, 2, 3, 4};
    CHECK(eval::spearman(x, std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(eval::spearman(x, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
    // Ranks of {1, 3, 2, 2}: 1, 4, 2.5, 2.5; rho = 1.5 / sqrt(5 * 4.5).
    CHECK(eval::spearman(x, std::vector<double>{1, 3, 2, 2}) == doctest::Approx(0.31622776601683794));
}

TEST_CASE("report files") {
    eval::ReportTable t;
    t.stamp = {0x1234, 7, "oracle"};
    t.seeds = {1, 2};
    t.ts_win_rate = eval::SummaryStats{61.5, 2.0};
    eval::EvalReport a{"SFT", 100, 30.0, 90.0, 80.0, 88.0, 4.5, {}};
    eval::EvalReport b{"SFT", 100, 34.0, 92.0, 82.0, 90.0, 4.7, {}};
    t.rows.push_back({"SFT", {a, b}});
    std::ostringstream csv, md;
    eval::write_report_csv(csv, t);
    eval::write_report_markdown(md, t);
    CHECK(csv.str() ==
          "# plad-report version=1 config_hash=0000000000001234 seed=7 reward=oracle\n"
          "method,n_seeds,n_examples,word_count,word_count_sd,rouge1,rouge1_sd,rouge2,rouge2_sd,rougeL,rougeL_sd,"
          "win_rate,win_rate_sd\n"
          "SFT,2,100,4.6000,0.1414,91.0000,1.4142,81.0000,1.4142,89.0000,1.4142,32.0000,2.8284\n");
    CHECK(md.str().find("| SFT | 4.60 | 91.00 | 81.00 | 89.00 | 32.00 ± 2.83 |") != std::string::npos);
    CHECK(md.str().find("T-S WR = 61.50") != std::string::npos);

    a.buckets = {{0, 10, 4, 50, 25, 25, true}, {10, std::numeric_limits<double>::infinity(), 6, 0, 0, 0, false}};
    std::stringstream js;
    eval::write_eval_report_json(js, a, t.stamp);
    eval::ReportStamp st;
    const auto back = eval::read_eval_report_json(js, &st);
    CHECK(st.config_hash == 0x1234);
    CHECK(back.win_rate == 30.0);
    REQUIRE(back.buckets.size() == 2);
    CHECK(std::isinf(back.buckets[1].hi));
    CHECK(back.buckets[0].low_support);
}
