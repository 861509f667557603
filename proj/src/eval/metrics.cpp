#include "plad/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "plad/numerics/random.hpp"

namespace plad::eval {

namespace {

std::vector<std::string> lower_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double f_measure(double overlap, double cand_total, double ref_total) {
    if (overlap == 0.0 || cand_total == 0.0 || ref_total == 0.0) return 0.0;
    const double p = overlap / cand_total;
    const double r = overlap / ref_total;
    return 100.0 * 2.0 * p * r / (p + r);
}

void require_aligned(std::size_t a, std::size_t b, std::size_t c) {
    if (a != b || a != c) throw std::invalid_argument("outputs, targets and prompts must have equal lengths");
    if (a == 0) throw std::invalid_argument("win rate needs at least one example");
}

std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double win_rate(std::span<const std::string> outputs, std::span<const std::string> targets,
                std::span<const std::string> prompts, const RewardModel& reward) {
    require_aligned(outputs.size(), targets.size(), prompts.size());
    std::size_t wins = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i)
        if (reward.score(prompts[i], outputs[i]) > reward.score(prompts[i], targets[i])) ++wins;
    return 100.0 * static_cast<double>(wins) / static_cast<double>(outputs.size());
}

double rouge_n(std::string_view candidate, std::string_view reference, int n) {
    if (n < 1) throw std::invalid_argument("rouge_n needs n >= 1");
    const auto c = lower_words(candidate);
    const auto r = lower_words(reference);
    const auto un = static_cast<std::size_t>(n);
    if (c.size() < un || r.size() < un) return 0.0;
    auto grams = [un](const std::vector<std::string>& w) {
        std::map<std::vector<std::string>, std::size_t> m;
        for (std::size_t i = 0; i + un <= w.size(); ++i) ++m[std::vector<std::string>(w.begin() + static_cast<std::ptrdiff_t>(i), w.begin() + static_cast<std::ptrdiff_t>(i + un))];
        return m;
    };
    const auto gc = grams(c);
    const auto gr = grams(r);
    std::size_t overlap = 0;
    for (const auto& [g, k] : gc) {
        const auto it = gr.find(g);
        if (it != gr.end()) overlap += std::min(k, it->second);
    }
    return f_measure(static_cast<double>(overlap), static_cast<double>(c.size() - un + 1),
                     static_cast<double>(r.size() - un + 1));
}

double rouge_l(std::string_view candidate, std::string_view reference) {
    const auto c = lower_words(candidate);
    const auto r = lower_words(reference);
    if (c.empty() || r.empty()) return 0.0;
    std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
    for (std::size_t i = 1; i <= c.size(); ++i) {
        for (std::size_t j = 1; j <= r.size(); ++j)
            cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return f_measure(static_cast<double>(prev[r.size()]), static_cast<double>(c.size()), static_cast<double>(r.size()));
}

std::size_t word_count(std::string_view text) { return lower_words(text).size(); }

double mean_word_count(std::span<const std::string> texts) {
    if (texts.empty()) return 0.0;
    double total = 0.0;
    for (const auto& t : texts) total += static_cast<double>(word_count(t));
    return total / static_cast<double>(texts.size());
}

std::vector<BucketRow> length_bucketed_delta_win_rate(std::span<const std::string> method_outputs,
                                                      std::span<const std::string> initial_outputs,
                                                      std::span<const std::string> targets,
                                                      std::span<const std::string> prompts, const RewardModel& reward,
                                                      std::span<const double> edges) {
    require_aligned(method_outputs.size(), targets.size(), prompts.size());
    if (initial_outputs.size() != method_outputs.size())
        throw std::invalid_argument("initial student outputs must align with method outputs");
    if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end()))
        throw std::invalid_argument("bucket edges must be ascending with at least two entries");
    std::vector<BucketRow> rows(edges.size() - 1);
    std::vector<std::size_t> method_wins(rows.size(), 0), initial_wins(rows.size(), 0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        rows[k].lo = edges[k];
        rows[k].hi = edges[k + 1];
    }
    for (std::size_t i = 0; i < method_outputs.size(); ++i) {
        const auto wc = static_cast<double>(word_count(method_outputs[i]));
        std::size_t k = 0;
        while (k < rows.size() && !(wc <= rows[k].hi)) ++k;
        if (k == rows.size() || wc < rows[0].lo) continue;
        ++rows[k].count;
        const double target = reward.score(prompts[i], targets[i]);
        if (reward.score(prompts[i], method_outputs[i]) > target) ++method_wins[k];
        if (reward.score(prompts[i], initial_outputs[i]) > target) ++initial_wins[k];
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
        auto& row = rows[k];
        row.low_support = row.count < 5;
        if (row.count == 0) continue;
        const double n = static_cast<double>(row.count);
        row.method_win_rate = 100.0 * static_cast<double>(method_wins[k]) / n;
        row.initial_win_rate = 100.0 * static_cast<double>(initial_wins[k]) / n;
        row.delta = row.method_win_rate - row.initial_win_rate;
    }
    return rows;
}

std::vector<std::size_t> fraction_subset(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in (0, 1]");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    num::Rng rng(num::mix_seed(seed ^ 0x7363616c65ull));
    num::shuffle(idx, rng);
    const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    idx.resize(std::max<std::size_t>(keep, n > 0 ? 1 : 0));
    return idx;
}

std::vector<ScalingPoint> scaling_curve(std::span<const double> fractions, std::span<const std::uint64_t> seeds,
                                        const ScalingRun& run) {
    if (fractions.empty() || seeds.empty()) throw std::invalid_argument("scaling_curve needs fractions and seeds");
    if (!std::is_sorted(fractions.begin(), fractions.end()))
        throw std::invalid_argument("scaling fractions must be ascending");
    std::vector<ScalingPoint> out;
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("scaling fractions must be in (0, 1]");
        ScalingPoint p;
        p.fraction = f;
        for (auto s : seeds) p.per_seed.push_back(run(f, s));
        p.mean_win_rate = mean(p.per_seed);
        p.stddev = sample_stddev(p.per_seed);
        out.push_back(std::move(p));
    }
    return out;
}

Preference RewardJudge::judge(std::string_view a, std::string_view b, std::string_view prompt) const {
    const double sa = reward_->score(prompt, a);
    const double sb = reward_->score(prompt, b);
    if (sa > sb) return Preference::a;
    if (sb > sa) return Preference::b;
    return Preference::tie;
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman needs two aligned samples");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace plad::eval
