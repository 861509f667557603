#include <cmath>
#include <sstream>

#include "doctest.h"
#include "plad/calibration/calibration.hpp"
#include "plad/lm/inference.hpp"
#include "support/calibration_fd.hpp"

using namespace plad;
using calibration::Embeddings;
using lm::Tokens;
using preference::PreferencePair;

namespace {

using testing::toy_arch;
using testing::toy_pairs;

bool same_params(const lm::ModelParams& a, const lm::ModelParams& b) {
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        if (!std::ranges::equal(a.tensors[i].values(), b.tensors[i].values())) return false;
    return true;
}

train::TrainConfig distill_cfg(int epochs = 1) {
    train::TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.batch_size = 2;
    cfg.epochs = epochs;
    cfg.seed = 4;
    return cfg;
}

double batched_gradient_error(calibration::Variant variant) {
    const auto r = testing::calibration_gradient_check(variant);
    REQUIRE(r.parameters <= 2000);
    CHECK(r.fd.checked == r.parameters);
    return r.fd.max_rel_error;
}

}  // namespace

TEST_CASE("rank loss values") {
    CHECK(calibration::rank_loss(-2.0, -2.0, 1.0) == 1.0);
    CHECK(calibration::rank_loss(0.0, -2.0, 1.0) == 0.0);
    CHECK(calibration::rank_loss(-3.0, -2.5, 0.4) == doctest::Approx(0.9).epsilon(1e-14));
}

TEST_CASE("rank loss properties") {
    num::Rng rng(3);
    for (int t = 0; t < 1000; ++t) {
        const double lp = rng.normal(-5.0, 3.0), lm_ = rng.normal(-5.0, 3.0), beta = 2.0 * rng.uniform();
        const double l = calibration::rank_loss(lp, lm_, beta);
        CHECK(l >= 0.0);
        CHECK((l == 0.0) == (lp - lm_ >= beta));
        const double d = rng.normal(0.0, 1.0);
        CHECK(std::abs(calibration::rank_loss(lp + d, lm_, beta) - l) <= std::abs(d) + 1e-12);
        CHECK(std::abs(calibration::rank_loss(lp, lm_ + d, beta) - l) <= std::abs(d) + 1e-12);
        const double s = rng.uniform();
        CHECK(calibration::margin_loss(lp, lm_, s, s, beta) == calibration::rank_loss(lp, lm_, 0.0));
    }
}

TEST_CASE("margin loss values") {
    CHECK(calibration::margin_loss(-1.0, -1.0, 0.7, 0.7, 1.0) == calibration::rank_loss(-1.0, -1.0, 0.0));
    CHECK(calibration::margin_loss(-1.0, -1.0, 1.5, 0.5, 1.0) == 1.0);
    CHECK(calibration::margin_loss(-1.0, -1.0, 0.2, 0.9, 1.0) == 0.0);
}

TEST_CASE("score fixture: one extra candidate token") {
    const Embeddings cand = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const Embeddings ref = {{1, 0, 0}, {0, 1, 0}};
    const auto s = calibration::score_embeddings(cand, ref, 2);
    // F1: P = 2/3, R = 1. F2: bigrams (1,1,0)/sqrt2 and (0,1,1)/sqrt2 vs
    // (1,1,0)/sqrt2, P = (1 + 1/2)/2, R = 1.
    CHECK(std::abs(s.f[0] - 0.8) < 1e-9);
    CHECK(std::abs(s.f[1] - 6.0 / 7.0) < 1e-9);
    CHECK(std::abs(s.total - (0.8 + 6.0 / 7.0)) < 1e-9);
}

TEST_CASE("score fixture: negative similarity is clamped") {
    const Embeddings cand = {{1, 0}, {-1, 0}};
    const Embeddings ref = {{0.6, 0.8}};
    const auto s = calibration::score_embeddings(cand, ref, 2);
    // P = (0.6 + 0) / 2, R = 0.6; the reference has no bigram.
    CHECK(std::abs(s.f[0] - 2.0 * 0.3 * 0.6 / 0.9) < 1e-9);
    CHECK(s.f[1] == 0.0);
}

TEST_CASE("score fixture: oblique vectors") {
    const Embeddings cand = {{0.6, 0.8}, {0.8, 0.6}, {1, 0}};
    const Embeddings ref = {{0, 1}, {1, 0}};
    const auto s = calibration::score_embeddings(cand, ref, 2);
    const double p1 = (0.8 + 0.8 + 1.0) / 3.0, r1 = (0.8 + 1.0) / 2.0;
    // Bigrams: (1,1)/sqrt2 and (1.8,0.6)/sqrt3.6 against (1,1)/sqrt2.
    const double p2 = (1.0 + 2.4 / std::sqrt(7.2)) / 2.0, r2 = 1.0;
    CHECK(std::abs(s.f[0] - 2.0 * p1 * r1 / (p1 + r1)) < 1e-9);
    CHECK(std::abs(s.f[1] - 2.0 * p2 * r2 / (p2 + r2)) < 1e-9);
}

TEST_CASE("score of orthogonal token sets is zero") {
    const Embeddings a = {{1, 0, 0, 0}, {0, 1, 0, 0}};
    const Embeddings b = {{0, 0, 1, 0}, {0, 0, 0, 1}, {0, 0, 1, 0}};
    CHECK(calibration::score_embeddings(a, b, 2).total == 0.0);
}

TEST_CASE("self score equals n_max") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 5);
    const Tokens x = {0, 1};
    for (const Tokens& y : {Tokens{2, 3, v.eos()}, Tokens{1, 1, 0, 2}, Tokens{3, 2, 1, 0, v.eos()}}) {
        const int len = static_cast<int>(y.size()) - (y.back() == v.eos() ? 1 : 0);
        for (int n_max = 1; n_max <= len; ++n_max) {
            const auto s = calibration::score(m, x, y, y, n_max);
            CHECK(s.total == doctest::Approx(n_max).epsilon(1e-12));
            for (double f : s.f) CHECK(f == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("score stays within [0, n_max]") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 6);
    num::Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        Tokens a, b;
        for (int i = 0, n = 1 + static_cast<int>(rng.below(4)); i < n; ++i) a.push_back(static_cast<int>(rng.below(4)));
        for (int i = 0, n = 1 + static_cast<int>(rng.below(4)); i < n; ++i) b.push_back(static_cast<int>(rng.below(4)));
        const auto s = calibration::score(m, Tokens{0}, a, b, 2);
        CHECK(s.total >= 0.0);
        CHECK(s.total <= 2.0 + 1e-12);
    }
}

TEST_CASE("rank calibration gradient matches finite differences") {
    CHECK(batched_gradient_error(calibration::Variant::rank) <= 1e-5);
}

TEST_CASE("margin calibration gradient matches finite differences") {
    CHECK(batched_gradient_error(calibration::Variant::margin) <= 1e-5);
}

TEST_CASE("satisfied hinges with zero margin leave the model unchanged") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 8);
    auto pairs = toy_pairs(v);
    for (auto& p : pairs) {
        const double gap = lm::sequence_log_likelihood(m, p.prompt, p.chosen, false) -
                           lm::sequence_log_likelihood(m, p.prompt, p.rejected, false);
        if (gap < 0.0) std::swap(p.chosen, p.rejected);
    }
    calibration::CalLossConfig cal;
    cal.beta = 0.0;
    const auto res = calibration::distill_train(m, pairs, nullptr, distill_cfg(3), cal);
    CHECK(same_params(res.model, m));
    for (const auto& s : res.log) {
        CHECK(s.loss == 0.0);
        CHECK(s.hinge_active_fraction == 0.0);
    }
}

TEST_CASE("distillation is deterministic and widens the gap") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 9);
    const auto pairs = toy_pairs(v);
    for (auto variant : {calibration::Variant::rank, calibration::Variant::margin}) {
        calibration::CalLossConfig cal;
        cal.variant = variant;
        auto cfg = distill_cfg(10);
        cfg.lora = train::LoraConfig{4, 8.0, 0.1};
        const auto a = calibration::distill_train(m, pairs, nullptr, cfg, cal);
        const auto b = calibration::distill_train(m, pairs, nullptr, cfg, cal);
        CHECK(same_params(a.model, b.model));
        CHECK(calibration::mean_log_likelihood_gap(a.model, pairs, false) >
              calibration::mean_log_likelihood_gap(m, pairs, false));
        CHECK(a.log.size() == 20);
    }
}

TEST_CASE("hinge moving average does not rise over the first 50 steps") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 10);
    const auto pairs = toy_pairs(v);
    calibration::CalLossConfig cal;
    cal.beta = 2.0;
    auto cfg = distill_cfg(50);
    cfg.batch_size = 4;
    cfg.learning_rate = 2e-3;
    const auto res = calibration::distill_train(m, pairs, nullptr, cfg, cal);
    REQUIRE(res.log.size() == 50);
    double prev = 0.0;
    for (std::size_t t = 9; t < res.log.size(); ++t) {
        double ma = 0.0;
        for (std::size_t k = t - 9; k <= t; ++k) ma += res.log[k].loss / 10.0;
        if (t > 9) CHECK(ma <= prev * 1.05);
        prev = ma;
    }
}

TEST_CASE("margin variant needs a reference for every pair") {
    lm::Vocabulary v({"a", "b", "c", "d"});
    const auto m = lm::init_model(toy_arch(), v, 11);
    const auto pairs = toy_pairs(v);
    calibration::References refs = {{0, {1, v.eos()}}};
    calibration::CalLossConfig cal;
    cal.variant = calibration::Variant::margin;
    CHECK_THROWS_AS(calibration::distill_train(m, pairs, &refs, distill_cfg(), cal), std::invalid_argument);
    for (const auto& p : pairs) refs[p.example_id] = {1, v.eos()};
    CHECK_NOTHROW(calibration::distill_train(m, pairs, &refs, distill_cfg(), cal));
    cal.freeze_scores = true;
    CHECK_NOTHROW(calibration::distill_train(m, pairs, &refs, distill_cfg(), cal));
    CHECK_THROWS_AS(calibration::distill_train(m, {}, nullptr, distill_cfg(), cal), std::invalid_argument);
}

TEST_CASE("calibration log csv") {
    std::ostringstream out;
    calibration::write_calibration_log_csv(out, {{1, 0.5, 1e-4, -0.25, 0.75}});
    CHECK(out.str() == "step,loss,mean_gap,hinge_active_fraction\n1,0.5,-0.25,0.75\n");
}
