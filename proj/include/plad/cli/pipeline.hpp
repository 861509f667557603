#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plad/calibration/calibration.hpp"
#include "plad/cli/config.hpp"
#include "plad/eval/report.hpp"
#include "plad/lm/model.hpp"
#include "plad/preference/pairs.hpp"
#include "plad/tasks/task.hpp"
#include "plad/train/supervised.hpp"

namespace plad::cli {

// Stable artifact locations inside a run directory.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path corpus() const { return root / "corpus"; }
    std::filesystem::path seed_dir(std::uint64_t seed) const { return root / ("seed-" + std::to_string(seed)); }
    std::filesystem::path ckpt(std::uint64_t seed, const std::string& name) const {
        return seed_dir(seed) / ("ckpt_" + name + ".bin");
    }
    std::filesystem::path pairs(std::uint64_t seed) const { return seed_dir(seed) / "pairs.jsonl"; }
    std::filesystem::path logs(std::uint64_t seed) const { return seed_dir(seed) / "logs"; }
    std::filesystem::path seed_reports(std::uint64_t seed) const { return seed_dir(seed) / "reports"; }
    std::filesystem::path outputs(std::uint64_t seed) const { return seed_dir(seed) / "outputs"; }
    std::filesystem::path reports() const { return root / "reports"; }
};

// Table rows in report order, with the checkpoint each one is decoded from.
struct MethodSpec {
    const char* label;
    const char* checkpoint;
};
inline constexpr MethodSpec kMethods[] = {
    {"Teacher", "teacher"},   {"Initial Student", "student_init"}, {"SFT", "student_sft"},
    {"Standard KD", "student_kd"}, {"SeqKD", "student_seqkd"},   {"Ours", "student_distilled"},
};

// Shared state for one invocation: resolved config, paths and the corpus.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    const RunPaths& paths() const { return paths_; }
    std::uint64_t config_hash() const { return hash_; }
    const lm::Vocabulary& vocab() const { return vocab_; }

    // Refuse artifacts stamped with another config hash unless forced.
    void set_force(bool force) { force_ = force; }

    void gen_data();
    void sft_teacher(std::uint64_t seed);
    void sft_student(std::uint64_t seed);
    void make_pairs(std::uint64_t seed);
    void baselines(std::uint64_t seed);  // SFT continuation, Standard KD, SeqKD
    void distill(std::uint64_t seed);
    void evaluate(std::uint64_t seed);
    // Teacher vs initial student on dev prompts; also run by evaluate.
    double teacher_student_dev(std::uint64_t seed);

    std::vector<eval::RatioPoint> study_ratio();
    std::vector<eval::ScalingPoint> study_scaling();
    void study_length();
    void report();

    // Everything above, for every configured seed, then the studies.
    void run_all();

    // Accessors used by the acceptance suite.
    const tasks::Corpus& corpus();
    lm::ModelParams load_model(std::uint64_t seed, const std::string& name) const;
    preference::PairSet load_pairs(std::uint64_t seed) const;
    nlohmann::json load_summary(std::uint64_t seed, const std::string& name, bool strict = false) const;
    std::vector<std::string> greedy_outputs(const lm::ModelParams& model, const std::vector<tasks::Example>& split) const;
    double test_win_rate(const lm::ModelParams& model);
    double dev_win_rate(const lm::ModelParams& model);

    // Distillation from the initial student on the given pairs with the
    // variant chosen for this seed.
    lm::ModelParams distill_on(std::uint64_t seed, const std::vector<preference::PreferencePair>& pairs);

private:
    std::uint64_t phase_seed(std::uint64_t seed, std::uint64_t phase) const;
    eval::ReportStamp stamp(std::uint64_t seed) const;
    lm::ArtifactStamp artifact_stamp(std::uint64_t seed, const std::string& tag) const;
    void save_model(std::uint64_t seed, const std::string& name, lm::ModelParams model) const;
    void write_log(std::uint64_t seed, const std::string& name, const std::string& body) const;
    void write_summary(std::uint64_t seed, const std::string& name, const nlohmann::json& j) const;
    void check_stamp(const std::filesystem::path& path, std::uint64_t hash, bool strict = false) const;
    std::vector<train::LabeledExample> labeled(const std::vector<tasks::Example>& split) const;
    std::vector<preference::PromptItem> prompt_items(const std::vector<tasks::Example>& split) const;
    calibration::References references(const std::vector<preference::PreferencePair>& pairs);
    lm::ModelParams distill_variant(std::uint64_t seed, const std::vector<preference::PreferencePair>& pairs,
                                    calibration::Variant variant, std::vector<calibration::CalStepLog>* log);

    RunConfig cfg_;
    RunPaths paths_;
    std::uint64_t hash_;
    lm::Vocabulary vocab_;
    std::optional<tasks::Corpus> corpus_;
    bool force_ = false;
};

// Applies --deterministic / threads to every parallel region.
void configure_threads(const RunConfig& cfg);

}  // namespace plad::cli
