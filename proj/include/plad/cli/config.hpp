#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "plad/calibration/calibration.hpp"
#include "plad/lm/model.hpp"
#include "plad/tasks/task.hpp"
#include "plad/train/config.hpp"

namespace plad::cli {

// Bad config values or flags; the message names the field.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An upstream artifact that a command needs is not on disk.
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Which reference the margin variant scores against.
enum class MarginReference { teacher_output, target };

struct RunConfig {
    tasks::TaskSpec task;
    lm::ArchConfig teacher = lm::teacher_arch();
    lm::ArchConfig student = lm::student_arch();

    // From-scratch SFT on the labeled split. Teacher and student get the same
    // budget.
    train::TrainConfig sft_teacher;
    train::TrainConfig sft_student;
    // Post-SFT phases, all starting from the initial student.
    train::TrainConfig sft_continue;
    train::TrainConfig standard_kd;
    train::TrainConfig seqkd;
    train::TrainConfig distill;

    calibration::CalLossConfig calibration;
    bool select_variant_on_dev = true;  // train both variants, keep the better dev win rate
    MarginReference margin_reference = MarginReference::teacher_output;

    double pair_gamma = 0.7;
    int max_output_len = 16;

    std::vector<double> bucket_edges = {0, 3, 6, 9, 12, std::numeric_limits<double>::infinity()};
    std::vector<double> ratios = {0.0, 0.5, 1.0};
    std::vector<double> fractions = {0.05, 0.25, 0.5, 1.0};
    std::vector<std::uint64_t> seeds = {0, 1, 2};

    std::filesystem::path out = "runs/default";
    bool deterministic = false;
    int threads = 0;  // 0: OpenMP default

    RunConfig();

    // Throws ValidationError naming the offending field.
    void validate() const;
    // FNV-1a over the canonical JSON of everything that affects results
    // (output directory, threads, seeds and study lists are excluded; each
    // artifact records its own seed, study CSVs list their own points).
    std::uint64_t hash() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
};

std::string hex64(std::uint64_t v);

}  // namespace plad::cli
