#include "plad/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace plad::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
    throw ValidationError(field + ": " + what);
}

// Rejects keys the schema does not know, so typos do not pass silently.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(where, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, _] : j.items())
        if (!ok.contains(k)) fail(where.empty() ? k : where + "." + k, "unknown key");
}

template <class T>
void read(const json& j, const char* key, T& into, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(where + "." + key, "wrong type");
    }
}

double edge_from_json(const json& v, const std::string& field) {
    if (v.is_string() && v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    if (!v.is_number()) fail(field, "bucket edges must be numbers or \"inf\"");
    return v.get<double>();
}

json arch_json(const lm::ArchConfig& a) {
    return {{"n_layers", a.n_layers}, {"width", a.width}, {"n_heads", a.n_heads}, {"max_len", a.max_len},
            {"positional", a.positional}};
}

void arch_from(const json& j, lm::ArchConfig& a, const std::string& where) {
    check_keys(j, where, {"n_layers", "width", "n_heads", "max_len", "positional"});
    read(j, "n_layers", a.n_layers, where);
    read(j, "width", a.width, where);
    read(j, "n_heads", a.n_heads, where);
    read(j, "max_len", a.max_len, where);
    read(j, "positional", a.positional, where);
}

json phase_json(const train::TrainConfig& c) {
    json j = {{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"length_normalize", c.length_normalize},
              {"max_grad_norm", c.max_grad_norm}};
    if (c.lora) j["lora"] = {{"rank", c.lora->rank}, {"alpha", c.lora->alpha}, {"dropout", c.lora->dropout}};
    else j["lora"] = nullptr;
    return j;
}

void phase_from(const json& j, train::TrainConfig& c, const std::string& where) {
    check_keys(j, where, {"learning_rate", "batch_size", "epochs", "length_normalize", "max_grad_norm", "lora"});
    read(j, "learning_rate", c.learning_rate, where);
    read(j, "batch_size", c.batch_size, where);
    read(j, "epochs", c.epochs, where);
    read(j, "length_normalize", c.length_normalize, where);
    read(j, "max_grad_norm", c.max_grad_norm, where);
    if (j.contains("lora")) {
        const auto& l = j["lora"];
        if (l.is_null()) {
            c.lora.reset();
        } else {
            check_keys(l, where + ".lora", {"rank", "alpha", "dropout"});
            train::LoraConfig lc = c.lora.value_or(train::LoraConfig{});
            read(l, "rank", lc.rank, where + ".lora");
            read(l, "alpha", lc.alpha, where + ".lora");
            read(l, "dropout", lc.dropout, where + ".lora");
            c.lora = lc;
        }
    }
}

void validate_phase(const train::TrainConfig& c, const std::string& where) {
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

void validate_arch(const lm::ArchConfig& a, const std::string& where) {
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        fail(where, e.what());
    }
}

}  // namespace

std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

RunConfig::RunConfig() {
    task.reference_corruption = 0.5;
    task.train_size = 4096;
    task.distill_size = 4096;
    task.seed = 1234;

    sft_teacher.learning_rate = 3e-3;
    sft_teacher.batch_size = 16;
    sft_teacher.epochs = 4;
    sft_student = sft_teacher;

    const train::LoraConfig lora{8, 32.0, 0.1};
    sft_continue.learning_rate = 1e-4;
    sft_continue.batch_size = 8;
    sft_continue.epochs = 1;
    sft_continue.lora = lora;
    standard_kd = sft_continue;
    seqkd = sft_continue;
    distill = sft_continue;
}

void RunConfig::validate() const {
    validate_arch(teacher, "teacher");
    validate_arch(student, "student");
    try {
        task.validate(std::min(teacher.max_len, student.max_len));
    } catch (const std::invalid_argument& e) {
        fail("task", e.what());
    }
    validate_phase(sft_teacher, "train.sft_teacher");
    validate_phase(sft_student, "train.sft_student");
    validate_phase(sft_continue, "train.sft_continue");
    validate_phase(standard_kd, "train.standard_kd");
    validate_phase(seqkd, "train.seqkd");
    validate_phase(distill, "train.distill");
    if (!(calibration.beta >= 0.0)) fail("calibration.beta", "must be >= 0");
    if (calibration.n_max < 1) fail("calibration.n_max", "must be >= 1");
    if (!(pair_gamma > 0.0)) fail("pairs.gamma", "must be positive");
    if (max_output_len < 1) fail("pairs.max_output_len", "must be >= 1");
    if (max_output_len < task.max_target_len()) fail("pairs.max_output_len", "shorter than the longest reference");
    if (bucket_edges.size() < 2 || !std::is_sorted(bucket_edges.begin(), bucket_edges.end()))
        fail("eval.bucket_edges", "need at least two ascending edges");
    for (double r : ratios)
        if (!(r >= 0.0 && r <= 1.0)) fail("studies.ratios", "every ratio must be in [0, 1]");
    if (fractions.empty() || !std::is_sorted(fractions.begin(), fractions.end()))
        fail("studies.fractions", "must be non-empty and ascending");
    for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0)) fail("studies.fractions", "every fraction must be in (0, 1]");
    if (seeds.empty()) fail("seeds", "need at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) fail("seeds", "duplicate seed");
    if (threads < 0) fail("threads", "must be >= 0");
}

json RunConfig::to_json() const {
    json edges = json::array();
    for (double e : bucket_edges) edges.push_back(std::isinf(e) ? json("inf") : json(e));
    return {
        {"task",
         {{"n_key_symbols", task.n_key_symbols},
          {"n_noise_symbols", task.n_noise_symbols},
          {"prompt_min_len", task.prompt_min_len},
          {"prompt_max_len", task.prompt_max_len},
          {"noise_rate", task.noise_rate},
          {"reference_corruption", task.reference_corruption},
          {"train_size", task.train_size},
          {"distill_size", task.distill_size},
          {"dev_size", task.dev_size},
          {"test_size", task.test_size},
          {"seed", task.seed}}},
        {"teacher", arch_json(teacher)},
        {"student", arch_json(student)},
        {"train",
         {{"sft_teacher", phase_json(sft_teacher)},
          {"sft_student", phase_json(sft_student)},
          {"sft_continue", phase_json(sft_continue)},
          {"standard_kd", phase_json(standard_kd)},
          {"seqkd", phase_json(seqkd)},
          {"distill", phase_json(distill)}}},
        {"calibration",
         {{"variant", calibration.variant == calibration::Variant::rank ? "rank" : "margin"},
          {"beta", calibration.beta},
          {"n_max", calibration.n_max},
          {"length_normalize", calibration.length_normalize},
          {"freeze_scores", calibration.freeze_scores},
          {"select_on_dev", select_variant_on_dev},
          {"reference", margin_reference == MarginReference::target ? "target" : "teacher"}}},
        {"pairs", {{"gamma", pair_gamma}, {"max_output_len", max_output_len}}},
        {"eval", {{"bucket_edges", edges}}},
        {"studies", {{"ratios", ratios}, {"fractions", fractions}}},
        {"seeds", seeds},
        {"out", out.string()},
        {"deterministic", deterministic},
        {"threads", threads},
    };
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    check_keys(j, "", {"task", "teacher", "student", "train", "calibration", "pairs", "eval", "studies", "seeds", "out",
                       "deterministic", "threads"});
    if (j.contains("task")) {
        const auto& t = j["task"];
        check_keys(t, "task", {"n_key_symbols", "n_noise_symbols", "prompt_min_len", "prompt_max_len", "noise_rate",
                               "reference_corruption", "train_size", "distill_size", "dev_size", "test_size", "seed"});
        read(t, "n_key_symbols", c.task.n_key_symbols, "task");
        read(t, "n_noise_symbols", c.task.n_noise_symbols, "task");
        read(t, "prompt_min_len", c.task.prompt_min_len, "task");
        read(t, "prompt_max_len", c.task.prompt_max_len, "task");
        read(t, "noise_rate", c.task.noise_rate, "task");
        read(t, "reference_corruption", c.task.reference_corruption, "task");
        read(t, "train_size", c.task.train_size, "task");
        read(t, "distill_size", c.task.distill_size, "task");
        read(t, "dev_size", c.task.dev_size, "task");
        read(t, "test_size", c.task.test_size, "task");
        read(t, "seed", c.task.seed, "task");
    }
    if (j.contains("teacher")) arch_from(j["teacher"], c.teacher, "teacher");
    if (j.contains("student")) arch_from(j["student"], c.student, "student");
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t, "train", {"sft_teacher", "sft_student", "sft_continue", "standard_kd", "seqkd", "distill"});
        if (t.contains("sft_teacher")) phase_from(t["sft_teacher"], c.sft_teacher, "train.sft_teacher");
        if (t.contains("sft_student")) phase_from(t["sft_student"], c.sft_student, "train.sft_student");
        if (t.contains("sft_continue")) phase_from(t["sft_continue"], c.sft_continue, "train.sft_continue");
        if (t.contains("standard_kd")) phase_from(t["standard_kd"], c.standard_kd, "train.standard_kd");
        if (t.contains("seqkd")) phase_from(t["seqkd"], c.seqkd, "train.seqkd");
        if (t.contains("distill")) phase_from(t["distill"], c.distill, "train.distill");
    }
    if (j.contains("calibration")) {
        const auto& k = j["calibration"];
        check_keys(k, "calibration",
                   {"variant", "beta", "n_max", "length_normalize", "freeze_scores", "select_on_dev", "reference"});
        std::string variant = c.calibration.variant == calibration::Variant::rank ? "rank" : "margin";
        read(k, "variant", variant, "calibration");
        if (variant == "rank") c.calibration.variant = calibration::Variant::rank;
        else if (variant == "margin") c.calibration.variant = calibration::Variant::margin;
        else fail("calibration.variant", "must be \"rank\" or \"margin\"");
        read(k, "beta", c.calibration.beta, "calibration");
        read(k, "n_max", c.calibration.n_max, "calibration");
        read(k, "length_normalize", c.calibration.length_normalize, "calibration");
        read(k, "freeze_scores", c.calibration.freeze_scores, "calibration");
        read(k, "select_on_dev", c.select_variant_on_dev, "calibration");
        std::string ref = c.margin_reference == MarginReference::target ? "target" : "teacher";
        read(k, "reference", ref, "calibration");
        if (ref == "teacher") c.margin_reference = MarginReference::teacher_output;
        else if (ref == "target") c.margin_reference = MarginReference::target;
        else fail("calibration.reference", "must be \"teacher\" or \"target\"");
    }
    if (j.contains("pairs")) {
        check_keys(j["pairs"], "pairs", {"gamma", "max_output_len"});
        read(j["pairs"], "gamma", c.pair_gamma, "pairs");
        read(j["pairs"], "max_output_len", c.max_output_len, "pairs");
    }
    if (j.contains("eval")) {
        check_keys(j["eval"], "eval", {"bucket_edges"});
        if (j["eval"].contains("bucket_edges")) {
            const auto& e = j["eval"]["bucket_edges"];
            if (!e.is_array()) fail("eval.bucket_edges", "expected an array");
            c.bucket_edges.clear();
            for (const auto& v : e) c.bucket_edges.push_back(edge_from_json(v, "eval.bucket_edges"));
        }
    }
    if (j.contains("studies")) {
        check_keys(j["studies"], "studies", {"ratios", "fractions"});
        read(j["studies"], "ratios", c.ratios, "studies");
        read(j["studies"], "fractions", c.fractions, "studies");
    }
    read(j, "seeds", c.seeds, "");
    std::string out = c.out.string();
    read(j, "out", out, "");
    c.out = out;
    read(j, "deterministic", c.deterministic, "");
    read(j, "threads", c.threads, "");
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("--config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ValidationError("--config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::uint64_t RunConfig::hash() const {
    json j = to_json();
    j.erase("out");
    j.erase("deterministic");
    j.erase("threads");
    j.erase("seeds");
    j.erase("studies");  // study CSVs list their own ratios and fractions
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace plad::cli
