#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "plad/cli/pipeline.hpp"

namespace {

using plad::cli::MissingArtifact;
using plad::cli::Pipeline;
using plad::cli::RunConfig;
using plad::cli::ValidationError;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool deterministic = false;
    bool force = false;
    std::string loss;
    std::optional<double> beta;
    std::optional<double> gamma;
    std::vector<double> ratios;
    std::vector<double> fractions;
};

RunConfig build_config(const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.out.empty()) cfg.out = o.out;
    if (o.deterministic) cfg.deterministic = true;
    if (!o.loss.empty()) {
        cfg.calibration.variant = o.loss == "rank" ? plad::calibration::Variant::rank : plad::calibration::Variant::margin;
        cfg.select_variant_on_dev = false;
    }
    if (o.beta) cfg.calibration.beta = *o.beta;
    if (o.gamma) cfg.pair_gamma = *o.gamma;
    if (!o.ratios.empty()) cfg.ratios = o.ratios;
    if (!o.fractions.empty()) cfg.fractions = o.fractions;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"plad: preference-based distillation of a small student on a synthetic extraction task"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "run a single seed instead of the configured list");
    app.add_option("--out", o.out, "output directory");
    app.add_flag("--deterministic", o.deterministic, "single thread, byte-identical artifacts");
    app.add_flag("--force", o.force, "accept artifacts produced by a different config");
    app.add_option("--loss", o.loss, "calibration variant (disables dev selection)")->check(CLI::IsMember({"rank", "margin"}));
    app.add_option("--beta", o.beta, "hinge margin scale");
    app.add_option("--gamma", o.gamma, "sampling temperature for pair generation");
    app.add_option("--ratio", o.ratios, "real-preference ratios for `study ratio`");
    app.add_option("--fractions", o.fractions, "pair fractions for `study scaling`");

    std::string role = "teacher";
    std::string study;
    auto* gen = app.add_subcommand("gen-data", "generate the corpus splits");
    auto* sft = app.add_subcommand("sft", "supervised fine-tuning from scratch");
    sft->add_option("--role", role)->check(CLI::IsMember({"teacher", "student"}));
    auto* pairs = app.add_subcommand("pairs", "sample teacher/student preference pairs");
    auto* base = app.add_subcommand("baselines", "train the SFT, Standard KD and SeqKD students");
    auto* distill = app.add_subcommand("distill", "calibrated distillation on the pairs");
    auto* ev = app.add_subcommand("eval", "evaluate every method on the test split");
    auto* st = app.add_subcommand("study", "ratio, length or scaling study");
    st->add_option("kind", study)->required()->check(CLI::IsMember({"ratio", "length", "scaling"}));
    auto* rep = app.add_subcommand("report", "aggregate seeds into report.csv and report.md");
    auto* all = app.add_subcommand("all", "run the whole pipeline");
    auto* show = app.add_subcommand("config", "print the resolved config and its hash");
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = build_config(o);
        if (*show) {
            std::cout << cfg.to_json().dump(2) << "\nconfig_hash " << plad::cli::hex64(cfg.hash()) << '\n';
            return 0;
        }
        Pipeline p(cfg);
        p.set_force(o.force);
        const auto& seeds = p.config().seeds;
        if (*gen) p.gen_data();
        if (*sft) for (auto s : seeds) role == "teacher" ? p.sft_teacher(s) : p.sft_student(s);
        if (*pairs) for (auto s : seeds) p.make_pairs(s);
        if (*base) for (auto s : seeds) p.baselines(s);
        if (*distill) for (auto s : seeds) p.distill(s);
        if (*ev) for (auto s : seeds) p.evaluate(s);
        if (*st) {
            if (study == "ratio") p.study_ratio();
            else if (study == "length") p.study_length();
            else p.study_scaling();
        }
        if (*rep) p.report();
        if (*all) p.run_all();
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: bad config: " << e.what() << '\n';
        return 2;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
