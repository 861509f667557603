#include "plad/cli/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "plad/lm/checkpoint.hpp"
#include "plad/lm/inference.hpp"
#include "plad/numerics/kernels.hpp"
#include "plad/numerics/random.hpp"

namespace plad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Phase : std::uint64_t {
    kTeacherInit = 1,
    kTeacherSft,
    kStudentInit,
    kStudentSft,
    kSftContinue,
    kStandardKd,
    kSeqKd,
    kDistill,
    kPairSampling,
    kRatioMix,
    kScalingSubset,
    kDevPairs,
};

void require(const fs::path& p, const std::string& produced_by) {
    if (!fs::exists(p)) throw MissingArtifact("missing " + p.string() + " (run `plad " + produced_by + "` first)");
}

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

std::string stamp_comment(const std::string& kind, std::uint64_t hash, std::uint64_t seed) {
    return "# plad-" + kind + " version=1 config_hash=" + hex64(hash) + " seed=" + std::to_string(seed) + "\n";
}

lm::Tokens with_eos(const lm::Vocabulary& v, const std::string& text) {
    auto ids = v.encode(text);
    ids.push_back(v.eos());
    return ids;
}

void log_line(const std::string& s) { std::cerr << "[plad] " << s << std::endl; }

}  // namespace

void configure_threads(const RunConfig& cfg) {
    const int n = cfg.deterministic ? 1 : cfg.threads;
    num::kernels::set_num_threads(n);
    if (n > 0) omp_set_num_threads(n);
}

Pipeline::Pipeline(RunConfig cfg)
    : cfg_(std::move(cfg)), paths_{cfg_.out}, hash_(cfg_.hash()), vocab_(tasks::task_vocabulary(cfg_.task)) {
    cfg_.validate();
    configure_threads(cfg_);
}

std::uint64_t Pipeline::phase_seed(std::uint64_t seed, std::uint64_t phase) const {
    return num::mix_seed(num::mix_seed(seed) ^ phase);
}

eval::ReportStamp Pipeline::stamp(std::uint64_t seed) const { return {hash_, seed, tasks::OracleReward{}.name()}; }

lm::ArtifactStamp Pipeline::artifact_stamp(std::uint64_t seed, const std::string& tag) const {
    return {hash_, seed, tag};
}

// Upstream artifacts from another config are allowed (that is how a single
// stage gets rerun with an override) but flagged. The report is the one place
// where mixing is refused.
void Pipeline::check_stamp(const fs::path& path, std::uint64_t hash, bool strict) const {
    if (hash == hash_ || force_) return;
    const std::string msg = path.string() + " was produced by config " + hex64(hash) + " but the current config is " +
                            hex64(hash_);
    if (strict) throw ValidationError("refusing to mix " + msg + "; rerun the upstream commands or pass --force");
    log_line("warning: " + msg);
}

// ---------------------------------------------------------------- data

void Pipeline::gen_data() {
    const auto corpus = tasks::generate_corpus(cfg_.task);
    tasks::save_corpus(paths_.corpus(), corpus, {hash_, cfg_.task.seed});
    corpus_ = corpus;
    log_line("corpus: " + std::to_string(corpus.train.size()) + " train, " + std::to_string(corpus.distill.size()) +
             " distill, " + std::to_string(corpus.dev.size()) + " dev, " + std::to_string(corpus.test.size()) +
             " test -> " + paths_.corpus().string());
}

const tasks::Corpus& Pipeline::corpus() {
    if (!corpus_) {
        require(paths_.corpus() / "train.jsonl", "gen-data");
        tasks::FileStamp st;
        corpus_ = tasks::load_corpus(paths_.corpus(), &st);
        check_stamp(paths_.corpus(), st.config_hash);
    }
    return *corpus_;
}

std::vector<train::LabeledExample> Pipeline::labeled(const std::vector<tasks::Example>& split) const {
    std::vector<train::LabeledExample> out;
    out.reserve(split.size());
    for (const auto& ex : split) out.push_back({vocab_.encode(ex.prompt), with_eos(vocab_, ex.target)});
    return out;
}

std::vector<preference::PromptItem> Pipeline::prompt_items(const std::vector<tasks::Example>& split) const {
    std::vector<preference::PromptItem> out;
    out.reserve(split.size());
    for (const auto& ex : split) out.push_back({ex.id, vocab_.encode(ex.prompt)});
    return out;
}

// ---------------------------------------------------------------- artifacts

void Pipeline::save_model(std::uint64_t seed, const std::string& name, lm::ModelParams model) const {
    model.stamp = artifact_stamp(seed, name);
    fs::create_directories(paths_.seed_dir(seed));
    lm::save_checkpoint(paths_.ckpt(seed, name), model);
}

lm::ModelParams Pipeline::load_model(std::uint64_t seed, const std::string& name) const {
    const auto path = paths_.ckpt(seed, name);
    const char* producer = name == "teacher"             ? "sft --role teacher"
                           : name == "student_init"      ? "sft --role student"
                           : name == "student_distilled" ? "distill"
                                                         : "baselines";
    require(path, producer);
    auto m = lm::load_checkpoint(path);
    check_stamp(path, m.stamp.config_hash);
    if (!(m.vocab == vocab_)) throw ValidationError(path.string() + ": vocabulary does not match the task config");
    return m;
}

preference::PairSet Pipeline::load_pairs(std::uint64_t seed) const {
    const auto path = paths_.pairs(seed);
    require(path, "pairs");
    std::ifstream f(path, std::ios::binary);
    lm::ArtifactStamp st;
    auto set = preference::read_pairs_jsonl(f, vocab_, &st);
    check_stamp(path, st.config_hash);
    return set;
}

void Pipeline::write_log(std::uint64_t seed, const std::string& name, const std::string& body) const {
    auto f = open_out(paths_.logs(seed) / (name + ".csv"));
    f << stamp_comment("log", hash_, seed) << body;
}

void Pipeline::write_summary(std::uint64_t seed, const std::string& name, const json& j) const {
    json doc = j;
    doc["schema"] = "plad." + name;
    doc["version"] = 1;
    doc["config_hash"] = hash_;
    doc["seed"] = seed;
    auto f = open_out(paths_.seed_reports(seed) / (name + ".json"));
    f << doc.dump(2) << '\n';
}

json Pipeline::load_summary(std::uint64_t seed, const std::string& name, bool strict) const {
    const auto path = paths_.seed_reports(seed) / (name + ".json");
    require(path, name == "distill" ? "distill" : name == "pairs" ? "pairs" : "eval");
    std::ifstream f(path);
    const json j = json::parse(f);
    check_stamp(path, j.at("config_hash").get<std::uint64_t>(), strict);
    return j;
}

// ---------------------------------------------------------------- training

void Pipeline::sft_teacher(std::uint64_t seed) {
    const auto data = labeled(corpus().train);
    auto cfg = cfg_.sft_teacher;
    cfg.seed = phase_seed(seed, kTeacherSft);
    cfg.loss = train::LossKind::sft;
    const auto res = train::sft_train(lm::init_model(cfg_.teacher, vocab_, phase_seed(seed, kTeacherInit)), data, cfg);
    save_model(seed, "teacher", res.model);
    std::ostringstream log;
    train::write_step_log_csv(log, res.log);
    write_log(seed, "sft_teacher", log.str());
    log_line("seed " + std::to_string(seed) + ": teacher SFT done, train NLL " +
             std::to_string(train::mean_token_nll(res.model, data)));
}

void Pipeline::sft_student(std::uint64_t seed) {
    const auto data = labeled(corpus().train);
    auto cfg = cfg_.sft_student;
    cfg.seed = phase_seed(seed, kStudentSft);
    cfg.loss = train::LossKind::sft;
    const auto res = train::sft_train(lm::init_model(cfg_.student, vocab_, phase_seed(seed, kStudentInit)), data, cfg);
    save_model(seed, "student_init", res.model);
    std::ostringstream log;
    train::write_step_log_csv(log, res.log);
    write_log(seed, "sft_student", log.str());
    log_line("seed " + std::to_string(seed) + ": student SFT done, train NLL " +
             std::to_string(train::mean_token_nll(res.model, data)));
}

void Pipeline::make_pairs(std::uint64_t seed) {
    const auto teacher = load_model(seed, "teacher");
    const auto student = load_model(seed, "student_init");
    const auto items = prompt_items(corpus().distill);
    const auto set = preference::generate_pairs(teacher, student, items, cfg_.pair_gamma, cfg_.max_output_len,
                                                phase_seed(seed, kPairSampling));
    {
        auto f = open_out(paths_.pairs(seed));
        preference::write_pairs_jsonl(f, set, vocab_, artifact_stamp(seed, "pairs"));
    }
    const double ts = set.pairs.empty() ? 0.0
                                        : preference::teacher_student_win_rate(set.pairs, vocab_, tasks::OracleReward{});
    write_summary(seed, "pairs", {{"kept", set.pairs.size()}, {"dropped", set.dropped}, {"ts_win_rate_distill", ts}});
    log_line("seed " + std::to_string(seed) + ": " + std::to_string(set.pairs.size()) + " pairs (" +
             std::to_string(set.dropped) + " identical dropped), distill-set T-S WR " + std::to_string(ts));
}

void Pipeline::baselines(std::uint64_t seed) {
    const auto teacher = load_model(seed, "teacher");
    const auto student = load_model(seed, "student_init");
    const auto d0 = labeled(corpus().train);

    auto c = cfg_.sft_continue;
    c.seed = phase_seed(seed, kSftContinue);
    c.loss = train::LossKind::sft;
    auto res = train::sft_train(student, d0, c);
    save_model(seed, "student_sft", res.model);
    std::ostringstream log;
    train::write_step_log_csv(log, res.log);
    write_log(seed, "sft_continue", log.str());

    c = cfg_.standard_kd;
    c.seed = phase_seed(seed, kStandardKd);
    c.loss = train::LossKind::standard_kd;
    res = train::standard_kd_train(teacher, student, d0, c);
    save_model(seed, "student_kd", res.model);
    log.str("");
    train::write_step_log_csv(log, res.log);
    write_log(seed, "standard_kd", log.str());

    c = cfg_.seqkd;
    c.seed = phase_seed(seed, kSeqKd);
    c.loss = train::LossKind::seqkd;
    std::vector<lm::Tokens> prompts;
    for (const auto& ex : corpus().distill) prompts.push_back(vocab_.encode(ex.prompt));
    res = train::seqkd_train(teacher, student, prompts, cfg_.max_output_len, c);
    save_model(seed, "student_seqkd", res.model);
    log.str("");
    train::write_step_log_csv(log, res.log);
    write_log(seed, "seqkd", log.str());
    log_line("seed " + std::to_string(seed) + ": baselines done");
}

calibration::References Pipeline::references(const std::vector<preference::PreferencePair>& pairs) {
    calibration::References refs;
    std::map<std::uint64_t, const tasks::Example*> by_id;
    for (const auto& ex : corpus().distill) by_id[ex.id] = &ex;
    for (const auto& p : pairs) {
        const auto it = by_id.find(p.example_id);
        if (it == by_id.end()) throw ValidationError("pair " + std::to_string(p.example_id) + " is not in the distill split");
        refs[p.example_id] = with_eos(vocab_, it->second->target);
    }
    return refs;
}

lm::ModelParams Pipeline::distill_variant(std::uint64_t seed, const std::vector<preference::PreferencePair>& pairs,
                                          calibration::Variant variant, std::vector<calibration::CalStepLog>* log) {
    const auto student = load_model(seed, "student_init");
    auto c = cfg_.distill;
    c.seed = phase_seed(seed, kDistill);
    c.loss = variant == calibration::Variant::rank ? train::LossKind::cal_rank : train::LossKind::cal_margin;
    c.beta = cfg_.calibration.beta;
    auto cal = cfg_.calibration;
    cal.variant = variant;
    cal.length_normalize = cfg_.calibration.length_normalize;
    std::optional<calibration::References> refs;
    if (variant == calibration::Variant::margin && cfg_.margin_reference == MarginReference::target)
        refs = references(pairs);
    auto res = calibration::distill_train(student, pairs, refs ? &*refs : nullptr, c, cal);
    if (log) *log = std::move(res.log);
    return std::move(res.model);
}

lm::ModelParams Pipeline::distill_on(std::uint64_t seed, const std::vector<preference::PreferencePair>& pairs) {
    auto variant = cfg_.calibration.variant;
    const auto summary = paths_.seed_reports(seed) / "distill.json";
    if (fs::exists(summary)) variant = load_summary(seed, "distill").at("variant") == "margin" ? calibration::Variant::margin
                                                                                          : calibration::Variant::rank;
    return distill_variant(seed, pairs, variant, nullptr);
}

void Pipeline::distill(std::uint64_t seed) {
    const auto set = load_pairs(seed);
    if (set.pairs.empty()) throw ValidationError(paths_.pairs(seed).string() + " holds no pairs");
    const auto student = load_model(seed, "student_init");
    json summary = {{"pairs", set.pairs.size()}};

    std::vector<calibration::Variant> candidates = {cfg_.calibration.variant};
    if (cfg_.select_variant_on_dev) candidates = {calibration::Variant::rank, calibration::Variant::margin};
    std::optional<lm::ModelParams> best;
    std::vector<calibration::CalStepLog> best_log;
    double best_wr = -1.0;
    calibration::Variant chosen = candidates.front();
    for (auto v : candidates) {
        std::vector<calibration::CalStepLog> log;
        auto model = distill_variant(seed, set.pairs, v, &log);
        const std::string name = v == calibration::Variant::rank ? "rank" : "margin";
        if (candidates.size() > 1) {
            const double wr = dev_win_rate(model);
            summary["dev_win_rate_" + name] = wr;
            if (wr <= best_wr) continue;
            best_wr = wr;
        }
        best = std::move(model);
        best_log = std::move(log);
        chosen = v;
    }
    summary["variant"] = chosen == calibration::Variant::rank ? "rank" : "margin";
    summary["gap_before"] = calibration::mean_log_likelihood_gap(student, set.pairs, cfg_.calibration.length_normalize);
    summary["gap_after"] = calibration::mean_log_likelihood_gap(*best, set.pairs, cfg_.calibration.length_normalize);
    save_model(seed, "student_distilled", *best);
    std::ostringstream log;
    calibration::write_calibration_log_csv(log, best_log);
    write_log(seed, "distill", log.str());
    write_summary(seed, "distill", summary);
    log_line("seed " + std::to_string(seed) + ": distilled with " + summary["variant"].get<std::string>() +
             " loss, gap " + std::to_string(summary["gap_before"].get<double>()) + " -> " +
             std::to_string(summary["gap_after"].get<double>()));
}

// ---------------------------------------------------------------- evaluation

std::vector<std::string> Pipeline::greedy_outputs(const lm::ModelParams& model,
                                                  const std::vector<tasks::Example>& split) const {
    std::vector<std::string> out(split.size());
    const auto n = static_cast<std::ptrdiff_t>(split.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto x = vocab_.encode(split[static_cast<std::size_t>(i)].prompt);
        const int limit = std::min(cfg_.max_output_len, model.arch.max_len - static_cast<int>(x.size()));
        out[static_cast<std::size_t>(i)] = vocab_.decode(lm::greedy_decode(model, x, limit));
    }
    return out;
}

namespace {
double split_win_rate(const std::vector<std::string>& outputs, const std::vector<tasks::Example>& split) {
    std::vector<std::string> targets, prompts;
    for (const auto& ex : split) {
        targets.push_back(ex.target);
        prompts.push_back(ex.prompt);
    }
    return eval::win_rate(outputs, targets, prompts, tasks::OracleReward{});
}
}  // namespace

double Pipeline::test_win_rate(const lm::ModelParams& model) {
    return split_win_rate(greedy_outputs(model, corpus().test), corpus().test);
}

double Pipeline::dev_win_rate(const lm::ModelParams& model) {
    return split_win_rate(greedy_outputs(model, corpus().dev), corpus().dev);
}

void Pipeline::evaluate(std::uint64_t seed) {
    const auto& test = corpus().test;
    std::vector<std::string> targets, prompts;
    for (const auto& ex : test) {
        targets.push_back(ex.target);
        prompts.push_back(ex.prompt);
    }
    const tasks::OracleReward reward;
    for (const auto& m : kMethods) {
        const auto model = load_model(seed, m.checkpoint);
        const auto outputs = greedy_outputs(model, test);
        const auto report = eval::evaluate(m.label, outputs, targets, prompts, reward);
        auto f = open_out(paths_.seed_reports(seed) / ("eval_" + std::string(m.checkpoint) + ".json"));
        eval::write_eval_report_json(f, report, stamp(seed));
        auto o = open_out(paths_.outputs(seed) / (std::string(m.checkpoint) + ".jsonl"));
        o << json{{"schema", "plad.outputs"}, {"version", 1}, {"config_hash", hash_}, {"seed", seed}, {"method", m.label}}
                 .dump()
          << '\n';
        for (std::size_t i = 0; i < test.size(); ++i) o << json{{"id", test[i].id}, {"output", outputs[i]}}.dump() << '\n';
        log_line("seed " + std::to_string(seed) + ": " + m.label + " test WR " + std::to_string(report.win_rate) +
                 ", R-L " + std::to_string(report.rougeL));
    }
    teacher_student_dev(seed);
}

double Pipeline::teacher_student_dev(std::uint64_t seed) {
    const auto teacher = load_model(seed, "teacher");
    const auto student = load_model(seed, "student_init");
    const auto set = preference::generate_pairs(teacher, student, prompt_items(corpus().dev), cfg_.pair_gamma,
                                                cfg_.max_output_len, phase_seed(seed, kDevPairs));
    const double ts =
        set.pairs.empty() ? 0.0 : preference::teacher_student_win_rate(set.pairs, vocab_, tasks::OracleReward{});
    write_summary(seed, "ts_dev", {{"ts_win_rate", ts}, {"kept", set.pairs.size()}, {"dropped", set.dropped}});
    log_line("seed " + std::to_string(seed) + ": dev T-S WR " + std::to_string(ts));
    return ts;
}

// ---------------------------------------------------------------- studies

std::vector<eval::RatioPoint> Pipeline::study_ratio() {
    std::vector<eval::RatioPoint> points;
    for (double r : cfg_.ratios) points.push_back({r, 0.0, 0.0, {}});
    for (auto seed : cfg_.seeds) {
        const auto set = load_pairs(seed);
        for (auto& p : points) {
            const auto mixed = preference::mix_real_pairs(set.pairs, vocab_, tasks::OracleReward{}, p.ratio,
                                                          phase_seed(seed, kRatioMix));
            const double wr = test_win_rate(distill_on(seed, mixed.pairs));
            p.per_seed.push_back(wr);
            log_line("seed " + std::to_string(seed) + ": ratio " + std::to_string(p.ratio) + " -> WR " +
                     std::to_string(wr) + " (" + std::to_string(mixed.swapped) + " swapped, " +
                     std::to_string(mixed.ties) + " ties)");
        }
    }
    for (auto& p : points) {
        p.mean_win_rate = eval::mean(p.per_seed);
        p.stddev = eval::sample_stddev(p.per_seed);
    }
    auto f = open_out(paths_.reports() / "study_ratio.csv");
    eval::write_ratio_csv(f, stamp(cfg_.seeds.front()), points);
    return points;
}

std::vector<eval::ScalingPoint> Pipeline::study_scaling() {
    std::map<std::uint64_t, preference::PairSet> sets;
    for (auto seed : cfg_.seeds) sets[seed] = load_pairs(seed);
    const eval::ScalingRun run = [&](double fraction, std::uint64_t seed) {
        const auto& all = sets.at(seed).pairs;
        auto idx = eval::fraction_subset(all.size(), fraction, phase_seed(seed, kScalingSubset));
        std::sort(idx.begin(), idx.end());
        std::vector<preference::PreferencePair> subset;
        for (auto i : idx) subset.push_back(all[i]);
        const double wr = test_win_rate(distill_on(seed, subset));
        log_line("seed " + std::to_string(seed) + ": fraction " + std::to_string(fraction) + " (" +
                 std::to_string(subset.size()) + " pairs) -> WR " + std::to_string(wr));
        return wr;
    };
    const auto points = eval::scaling_curve(cfg_.fractions, cfg_.seeds, run);
    auto f = open_out(paths_.reports() / "study_scaling.csv");
    eval::write_scaling_csv(f, stamp(cfg_.seeds.front()), points);
    return points;
}

void Pipeline::study_length() {
    const auto& test = corpus().test;
    auto read_outputs = [&](std::uint64_t seed, const std::string& ckpt) {
        const auto path = paths_.outputs(seed) / (ckpt + ".jsonl");
        require(path, "eval");
        std::ifstream f(path);
        std::string line;
        std::getline(f, line);
        check_stamp(path, json::parse(line).at("config_hash").get<std::uint64_t>());
        std::vector<std::string> out;
        while (std::getline(f, line))
            if (!line.empty()) out.push_back(json::parse(line).at("output").get<std::string>());
        if (out.size() != test.size()) throw ValidationError(path.string() + " does not match the test split");
        return out;
    };
    auto f = open_out(paths_.reports() / "study_length.csv");
    bool first = true;
    for (const auto& m : kMethods) {
        const std::string ckpt = m.checkpoint;
        if (ckpt == "teacher" || ckpt == "student_init") continue;
        std::vector<std::string> method, initial, targets, prompts;
        for (auto seed : cfg_.seeds) {
            const auto a = read_outputs(seed, ckpt);
            const auto b = read_outputs(seed, "student_init");
            method.insert(method.end(), a.begin(), a.end());
            initial.insert(initial.end(), b.begin(), b.end());
            for (const auto& ex : test) {
                targets.push_back(ex.target);
                prompts.push_back(ex.prompt);
            }
        }
        const auto rows = eval::length_bucketed_delta_win_rate(method, initial, targets, prompts, tasks::OracleReward{},
                                                               cfg_.bucket_edges);
        std::ostringstream part;
        eval::write_buckets_csv(part, stamp(cfg_.seeds.front()), m.label, rows);
        std::string s = part.str();
        if (!first) s = s.substr(s.find('\n', s.find('\n') + 1) + 1);  // one stamp and header per file
        f << s;
        first = false;
    }
}

void Pipeline::report() {
    eval::ReportTable t;
    t.stamp = stamp(cfg_.seeds.front());
    t.seeds = cfg_.seeds;
    std::vector<double> ts;
    for (auto seed : cfg_.seeds) ts.push_back(load_summary(seed, "ts_dev", true).at("ts_win_rate").get<double>());
    t.ts_win_rate = eval::SummaryStats{eval::mean(ts), eval::sample_stddev(ts)};
    std::vector<std::string> variants;
    for (const auto& m : kMethods) {
        eval::MethodSummary row{m.label, {}};
        for (auto seed : cfg_.seeds) {
            const auto path = paths_.seed_reports(seed) / ("eval_" + std::string(m.checkpoint) + ".json");
            require(path, "eval");
            std::ifstream f(path);
            eval::ReportStamp st;
            row.per_seed.push_back(eval::read_eval_report_json(f, &st));
            check_stamp(path, st.config_hash, true);
        }
        t.rows.push_back(std::move(row));
    }
    for (auto seed : cfg_.seeds) variants.push_back(load_summary(seed, "distill", true).at("variant").get<std::string>());
    std::string note = "Ours uses the calibration variant picked on the dev split per seed:";
    for (std::size_t i = 0; i < variants.size(); ++i) note += (i ? ", " : " ") + variants[i];
    note += ". SFT, Standard KD, SeqKD and Ours all start from the initial student and train the same adapters.";
    t.notes.push_back(note);

    auto csv = open_out(paths_.reports() / "report.csv");
    eval::write_report_csv(csv, t);
    auto md = open_out(paths_.reports() / "report.md");
    eval::write_report_markdown(md, t);
    log_line("report -> " + (paths_.reports() / "report.md").string());
}

void Pipeline::run_all() {
    gen_data();
    for (auto seed : cfg_.seeds) {
        sft_teacher(seed);
        sft_student(seed);
        make_pairs(seed);
        baselines(seed);
        distill(seed);
        evaluate(seed);
    }
    report();
    study_length();
    study_ratio();
    study_scaling();
}

}  // namespace plad::cli
