#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plad/eval/metrics.hpp"

namespace plad::eval {

inline constexpr int kReportFormatVersion = 1;

struct EvalReport {
    std::string method;
    std::size_t n = 0;
    double win_rate = 0.0;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rougeL = 0.0;
    double mean_word_count = 0.0;
    std::vector<BucketRow> buckets;  // filled by the length study only
};

// Win rate against the targets plus mean ROUGE-1/2/L and word count.
EvalReport evaluate(const std::string& method, std::span<const std::string> outputs,
                    std::span<const std::string> targets, std::span<const std::string> prompts,
                    const RewardModel& reward);

struct ReportStamp {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string reward;
};

// One method across seeds.
struct MethodSummary {
    std::string method;
    std::vector<EvalReport> per_seed;
};

struct SummaryStats {
    double mean = 0.0;
    double sd = 0.0;
};

struct ReportTable {
    ReportStamp stamp;
    std::vector<std::uint64_t> seeds;
    std::optional<SummaryStats> ts_win_rate;  // teacher vs student on the dev split
    std::vector<MethodSummary> rows;
    std::vector<std::string> notes;
};

// Machine-readable: a "# plad-report" comment line with the stamp, then a
// header row and one row per method (means and sample sd over seeds).
void write_report_csv(std::ostream& out, const ReportTable& table);
// Method | Word Count | R-1 | R-2 | R-L | RM WR (%)
void write_report_markdown(std::ostream& out, const ReportTable& table);

void write_buckets_csv(std::ostream& out, const ReportStamp& stamp, const std::string& method,
                       std::span<const BucketRow> rows);
void write_scaling_csv(std::ostream& out, const ReportStamp& stamp, std::span<const ScalingPoint> points);

struct RatioPoint {
    double ratio = 0.0;
    double mean_win_rate = 0.0;
    double stddev = 0.0;
    std::vector<double> per_seed;
};
void write_ratio_csv(std::ostream& out, const ReportStamp& stamp, std::span<const RatioPoint> points);

// One EvalReport as a JSON document carrying its stamp.
void write_eval_report_json(std::ostream& out, const EvalReport& report, const ReportStamp& stamp);
EvalReport read_eval_report_json(std::istream& in, ReportStamp* stamp = nullptr);

}  // namespace plad::eval
