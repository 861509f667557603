#include "plad/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace plad::eval {

using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string edge(double v) { return std::isinf(v) ? "inf" : fixed(v, 0); }

std::string stamp_line(const std::string& kind, const ReportStamp& s) {
    return "# plad-" + kind + " version=" + std::to_string(kReportFormatVersion) + " config_hash=" + hex(s.config_hash) +
           " seed=" + std::to_string(s.seed) + " reward=" + s.reward + "\n";
}

template <class Get>
SummaryStats stats(const MethodSummary& m, Get get) {
    std::vector<double> xs;
    for (const auto& r : m.per_seed) xs.push_back(get(r));
    return {mean(xs), sample_stddev(xs)};
}

}  // namespace

EvalReport evaluate(const std::string& method, std::span<const std::string> outputs,
                    std::span<const std::string> targets, std::span<const std::string> prompts,
                    const RewardModel& reward) {
    EvalReport r;
    r.method = method;
    r.n = outputs.size();
    r.win_rate = win_rate(outputs, targets, prompts, reward);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        r.rouge1 += rouge_n(outputs[i], targets[i], 1);
        r.rouge2 += rouge_n(outputs[i], targets[i], 2);
        r.rougeL += rouge_l(outputs[i], targets[i]);
    }
    const double n = static_cast<double>(outputs.size());
    r.rouge1 /= n;
    r.rouge2 /= n;
    r.rougeL /= n;
    r.mean_word_count = mean_word_count(outputs);
    return r;
}

void write_report_csv(std::ostream& out, const ReportTable& t) {
    out << stamp_line("report", t.stamp);
    out << "method,n_seeds,n_examples,word_count,word_count_sd,rouge1,rouge1_sd,rouge2,rouge2_sd,rougeL,rougeL_sd,"
           "win_rate,win_rate_sd\n";
    for (const auto& m : t.rows) {
        const auto wc = stats(m, [](const EvalReport& r) { return r.mean_word_count; });
        const auto r1 = stats(m, [](const EvalReport& r) { return r.rouge1; });
        const auto r2 = stats(m, [](const EvalReport& r) { return r.rouge2; });
        const auto rl = stats(m, [](const EvalReport& r) { return r.rougeL; });
        const auto wr = stats(m, [](const EvalReport& r) { return r.win_rate; });
        const std::size_t n = m.per_seed.empty() ? 0 : m.per_seed.front().n;
        out << m.method << ',' << m.per_seed.size() << ',' << n;
        for (const auto& s : {wc, r1, r2, rl, wr}) out << ',' << fixed(s.mean) << ',' << fixed(s.sd);
        out << '\n';
    }
}

void write_report_markdown(std::ostream& out, const ReportTable& t) {
    out << "Synthetic key extraction";
    if (t.ts_win_rate) out << " | T-S WR = " << fixed(t.ts_win_rate->mean, 2);
    out << "\n\n";
    out << "| Method | Word Count | R-1 | R-2 | R-L | RM WR (%) |\n";
    out << "|---|---|---|---|---|---|\n";
    for (const auto& m : t.rows) {
        const auto wc = stats(m, [](const EvalReport& r) { return r.mean_word_count; });
        const auto r1 = stats(m, [](const EvalReport& r) { return r.rouge1; });
        const auto r2 = stats(m, [](const EvalReport& r) { return r.rouge2; });
        const auto rl = stats(m, [](const EvalReport& r) { return r.rougeL; });
        const auto wr = stats(m, [](const EvalReport& r) { return r.win_rate; });
        out << "| " << m.method << " | " << fixed(wc.mean, 2) << " | " << fixed(r1.mean, 2) << " | "
            << fixed(r2.mean, 2) << " | " << fixed(rl.mean, 2) << " | " << fixed(wr.mean, 2) << " ± "
            << fixed(wr.sd, 2) << " |\n";
    }
    out << "\nMeans over " << t.seeds.size() << " seed(s):";
    for (auto s : t.seeds) out << ' ' << s;
    out << ". Reward model: " << t.stamp.reward << ". Ties count as losses. Config hash " << hex(t.stamp.config_hash)
        << ".\n";
    for (const auto& n : t.notes) out << "\n" << n << "\n";
}

void write_buckets_csv(std::ostream& out, const ReportStamp& stamp, const std::string& method,
                       std::span<const BucketRow> rows) {
    out << stamp_line("buckets", stamp);
    out << "method,lo,hi,count,method_win_rate,initial_win_rate,delta_win_rate,low_support\n";
    for (const auto& r : rows) {
        out << method << ',' << edge(r.lo) << ',' << edge(r.hi) << ',' << r.count << ',' << fixed(r.method_win_rate)
            << ',' << fixed(r.initial_win_rate) << ',' << fixed(r.delta) << ',' << (r.low_support ? 1 : 0) << '\n';
    }
}

void write_scaling_csv(std::ostream& out, const ReportStamp& stamp, std::span<const ScalingPoint> points) {
    out << stamp_line("scaling", stamp);
    out << "fraction,mean_win_rate,sd,per_seed\n";
    for (const auto& p : points) {
        out << fixed(p.fraction) << ',' << fixed(p.mean_win_rate) << ',' << fixed(p.stddev) << ',';
        for (std::size_t i = 0; i < p.per_seed.size(); ++i) out << (i ? ";" : "") << fixed(p.per_seed[i]);
        out << '\n';
    }
}

void write_ratio_csv(std::ostream& out, const ReportStamp& stamp, std::span<const RatioPoint> points) {
    out << stamp_line("ratio", stamp);
    out << "ratio,mean_win_rate,sd,per_seed\n";
    for (const auto& p : points) {
        out << fixed(p.ratio) << ',' << fixed(p.mean_win_rate) << ',' << fixed(p.stddev) << ',';
        for (std::size_t i = 0; i < p.per_seed.size(); ++i) out << (i ? ";" : "") << fixed(p.per_seed[i]);
        out << '\n';
    }
}

void write_eval_report_json(std::ostream& out, const EvalReport& r, const ReportStamp& stamp) {
    json buckets = json::array();
    for (const auto& b : r.buckets) {
        buckets.push_back({{"lo", b.lo},
                           {"hi", std::isinf(b.hi) ? json("inf") : json(b.hi)},
                           {"count", b.count},
                           {"method_win_rate", b.method_win_rate},
                           {"initial_win_rate", b.initial_win_rate},
                           {"delta", b.delta},
                           {"low_support", b.low_support}});
    }
    json j = {{"schema", "plad.eval"},
              {"version", kReportFormatVersion},
              {"config_hash", stamp.config_hash},
              {"seed", stamp.seed},
              {"reward", stamp.reward},
              {"method", r.method},
              {"n", r.n},
              {"win_rate", r.win_rate},
              {"rouge1", r.rouge1},
              {"rouge2", r.rouge2},
              {"rougeL", r.rougeL},
              {"mean_word_count", r.mean_word_count},
              {"buckets", buckets}};
    out << j.dump(2) << '\n';
}

EvalReport read_eval_report_json(std::istream& in, ReportStamp* stamp) {
    const json j = json::parse(in);
    if (j.value("schema", "") != "plad.eval" || j.value("version", -1) != kReportFormatVersion)
        throw std::runtime_error("eval report: unsupported schema or version");
    if (stamp) {
        stamp->config_hash = j.at("config_hash").get<std::uint64_t>();
        stamp->seed = j.at("seed").get<std::uint64_t>();
        stamp->reward = j.at("reward").get<std::string>();
    }
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.win_rate = j.at("win_rate").get<double>();
    r.rouge1 = j.at("rouge1").get<double>();
    r.rouge2 = j.at("rouge2").get<double>();
    r.rougeL = j.at("rougeL").get<double>();
    r.mean_word_count = j.at("mean_word_count").get<double>();
    for (const auto& b : j.at("buckets")) {
        BucketRow row;
        row.lo = b.at("lo").get<double>();
        row.hi = b.at("hi").is_string() ? std::numeric_limits<double>::infinity() : b.at("hi").get<double>();
        row.count = b.at("count").get<std::size_t>();
        row.method_win_rate = b.at("method_win_rate").get<double>();
        row.initial_win_rate = b.at("initial_win_rate").get<double>();
        row.delta = b.at("delta").get<double>();
        row.low_support = b.at("low_support").get<bool>();
        r.buckets.push_back(row);
    }
    return r;
}

}  // namespace plad::eval
