#include "kdlab/config.hpp"

#include <cstdlib>
#include <set>

#include "json.hpp"

namespace kdlab {

namespace {

using nlohmann::json;

std::string log_base_name(LogBase base) {
    return base == LogBase::kNatural ? "natural" : "base2";
}

LogBase log_base_from_name(const std::string& name) {
    if (name == "natural") return LogBase::kNatural;
    if (name == "base2") return LogBase::kTwo;
    throw std::invalid_argument("unknown log base: \"" + name + "\" (natural|base2)");
}

// One config object level: typed getters collect errors, done() flags
// unknown keys.
struct Obj {
    const json& j;
    std::string prefix;
    std::vector<std::string>& errors;
    std::set<std::string> seen;

    Obj(const json& obj, std::string pfx, std::vector<std::string>& errs)
        : j(obj), prefix(std::move(pfx)), errors(errs) {}

    std::string label(const char* key) const { return prefix + key; }

    const json* raw(const char* key) {
        seen.insert(key);
        auto it = j.find(key);
        return it == j.end() ? nullptr : &*it;
    }

    void integer(const char* key, int& target, long long lo, long long hi) {
        const json* v = raw(key);
        if (!v) return;
        if (!v->is_number_integer()) {
            errors.push_back(label(key) + ": expected an integer");
            return;
        }
        const auto x = v->get<long long>();
        if (x < lo || x > hi) {
            errors.push_back(label(key) + ": " + std::to_string(x) +
                             " outside [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
            return;
        }
        target = static_cast<int>(x);
    }

    void u64(const char* key, std::uint64_t& target, bool& present) {
        const json* v = raw(key);
        if (!v) return;
        if (!v->is_number_unsigned() && !v->is_number_integer()) {
            errors.push_back(label(key) + ": expected a non-negative integer");
            return;
        }
        if (v->is_number_integer() && v->get<long long>() < 0) {
            errors.push_back(label(key) + ": must be non-negative");
            return;
        }
        target = v->get<std::uint64_t>();
        present = true;
    }

    void real(const char* key, double& target) {
        const json* v = raw(key);
        if (!v) return;
        if (!v->is_number()) {
            errors.push_back(label(key) + ": expected a number");
            return;
        }
        target = v->get<double>();
    }

    void str(const char* key, std::string& target) {
        const json* v = raw(key);
        if (!v) return;
        if (!v->is_string()) {
            errors.push_back(label(key) + ": expected a string");
            return;
        }
        target = v->get<std::string>();
    }

    // String field decoded through a *_from_name converter.
    template <typename T, typename F>
    void named(const char* key, T& target, F&& convert) {
        const json* v = raw(key);
        if (!v) return;
        if (!v->is_string()) {
            errors.push_back(label(key) + ": expected a string");
            return;
        }
        try {
            target = convert(v->get<std::string>());
        } catch (const std::invalid_argument& e) {
            errors.push_back(label(key) + ": " + e.what());
        }
    }

    const json* object(const char* key) {
        const json* v = raw(key);
        if (!v) return nullptr;
        if (!v->is_object()) {
            errors.push_back(label(key) + ": expected an object");
            return nullptr;
        }
        return v;
    }

    const json* array(const char* key) {
        const json* v = raw(key);
        if (!v) return nullptr;
        if (!v->is_array()) {
            errors.push_back(label(key) + ": expected an array");
            return nullptr;
        }
        return v;
    }

    void done() {
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!seen.contains(it.key())) {
                errors.push_back(prefix + it.key() + ": unknown key");
            }
        }
    }
};

void parse_model(const json& j, const std::string& prefix, ModelConfig& out,
                 std::vector<std::string>& errors) {
    Obj o(j, prefix + ".", errors);
    o.integer("vocab_size", out.vocab_size, 2, 256);
    o.integer("embed_dim", out.embed_dim, 1, 4096);
    o.integer("hidden_dim", out.hidden_dim, 1, 4096);
    o.integer("context_len", out.context_len, 1, 65536);
    o.named("arch", out.arch, arch_from_name);
    o.done();
}

void parse_divergence(const json& j, const std::string& prefix,
                      DivergenceSpec& out, std::vector<std::string>& errors) {
    Obj o(j, prefix + ".", errors);
    const bool had_weight = j.contains("weight");
    o.named("kind", out.kind, divergence_kind_from_name);
    if (!had_weight) out.weight = default_divergence_weight(out.kind);
    o.real("weight", out.weight);
    o.named("log_base", out.log_base, log_base_from_name);
    o.done();
    if (!(out.weight > 0.0 && out.weight < 1.0)) {
        errors.push_back(prefix + ".weight: must lie in (0, 1)");
    }
}

void parse_schedule(const json& j, const std::string& prefix,
                    ThresholdSchedule& out, std::vector<std::string>& errors) {
    Obj o(j, prefix + ".", errors);
    o.named("kind", out.kind, schedule_from_name);
    o.real("tau0", out.tau0);
    o.real("lambda", out.lambda);
    o.integer("max_len", out.max_len, 1, 65536);
    o.real("constant", out.constant);
    o.done();
}

void parse_policy(const json& j, const std::string& prefix, PolicySpec& out,
                  std::vector<std::string>& errors) {
    Obj o(j, prefix + ".", errors);
    o.named("kind", out.kind, policy_from_name);
    if (const json* s = o.object("schedule")) {
        parse_schedule(*s, prefix + ".schedule", out.schedule, errors);
    }
    o.real("alpha", out.alpha);
    o.real("p_teacher", out.p_teacher);
    o.real("temperature", out.temperature);
    o.integer("max_new_tokens", out.max_new_tokens, 0, 65536);
    o.done();
}

void parse_train(const json& j, RunConfig& config,
                 std::vector<std::string>& errors) {
    Obj o(j, "train.", errors);
    o.named("method", config.train.method, method_from_name);
    if (const json* d = o.object("divergence")) {
        parse_divergence(*d, "train.divergence", config.train.divergence, errors);
    }
    o.real("mix_ratio", config.train.mix_ratio);
    o.real("lm_loss_weight", config.train.lm_loss_weight);
    o.integer("epochs", config.train.epochs, 0, 1000000);
    o.integer("teacher_epochs", config.teacher_epochs, 0, 1000000);
    o.integer("init_epochs", config.init_epochs, 0, 1000000);
    o.integer("batch_size", config.train.batch_size, 1, 1000000);
    o.real("learning_rate", config.train.learning_rate);
    o.integer("eval_every", config.train.eval_every, 0, 1000000);
    o.done();
}

void parse_buckets(const json& j, LengthBucketSpec& out,
                   std::vector<std::string>& errors) {
    Obj o(j, "buckets.", errors);
    if (const json* a = o.array("boundaries")) {
        std::vector<int> boundaries;
        bool ok = true;
        for (const auto& v : *a) {
            if (!v.is_number_integer()) {
                errors.push_back("buckets.boundaries: expected integers");
                ok = false;
                break;
            }
            boundaries.push_back(v.get<int>());
        }
        if (ok) out.boundaries = std::move(boundaries);
    }
    o.done();
}

void parse_tasks(const json& a, std::vector<TaskSpec>& out,
                 std::vector<std::string>& errors) {
    std::vector<TaskSpec> tasks;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string prefix = "corpus.tasks[" + std::to_string(i) + "]";
        if (!a[i].is_object()) {
            errors.push_back(prefix + ": expected an object");
            continue;
        }
        TaskSpec t;
        Obj o(a[i], prefix + ".", errors);
        o.named("family", t.family, family_from_name);
        o.integer("min_len", t.min_len, 1, 65536);
        o.integer("max_len", t.max_len, 1, 65536);
        o.integer("count", t.count, 0, 10000000);
        o.done();
        if (t.max_len < t.min_len) {
            errors.push_back(prefix + ": max_len below min_len");
        }
        tasks.push_back(t);
    }
    out = std::move(tasks);
}

void parse_corpus(const json& j, CorpusConfig& out,
                  std::vector<std::string>& errors) {
    Obj o(j, "corpus.", errors);
    o.str("dir", out.dir);
    o.integer("vocab_size", out.vocab_size, 2, 256);
    o.integer("context_len", out.context_len, 4, 65536);
    if (const json* a = o.array("tasks")) parse_tasks(*a, out.tasks, errors);
    o.real("train_fraction", out.fractions.train);
    o.real("validation_fraction", out.fractions.validation);
    o.real("test_fraction", out.fractions.test);
    o.done();
}

void parse_eval(const json& j, EvalConfig& out, std::vector<std::string>& errors) {
    Obj o(j, "eval.", errors);
    o.integer("seeds", out.seeds, 1, 10000);
    o.integer("max_new_tokens", out.max_new_tokens, 1, 65536);
    o.integer("misguidance_items", out.misguidance_items, 1, 10000000);
    o.done();
}

void parse_sweep(const json& j, SweepConfig& out,
                 std::vector<std::string>& errors) {
    Obj o(j, "sweep.", errors);
    o.str("axis", out.axis);
    if (const json* a = o.array("lambdas")) {
        std::vector<double> lambdas;
        for (const auto& v : *a) {
            if (!v.is_number()) {
                errors.push_back("sweep.lambdas: expected numbers");
                break;
            }
            lambdas.push_back(v.get<double>());
        }
        out.lambdas = std::move(lambdas);
    }
    auto string_list = [&](const char* key, std::vector<std::string>& target) {
        if (const json* a = o.array(key)) {
            std::vector<std::string> items;
            for (const auto& v : *a) {
                if (!v.is_string()) {
                    errors.push_back("sweep." + std::string(key) +
                                     ": expected strings");
                    return;
                }
                items.push_back(v.get<std::string>());
            }
            target = std::move(items);
        }
    };
    string_list("strategies", out.strategies);
    string_list("divergences", out.divergences);
    o.integer("epochs", out.epochs, -1, 1000000);
    o.done();
}

void apply_override(json& root, const std::string& assignment,
                    std::vector<std::string>& errors) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        errors.push_back("override \"" + assignment + "\": expected key.path=value");
        return;
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json* node = &root;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot - pos);
        if (key.empty()) {
            errors.push_back("override \"" + assignment + "\": empty key segment");
            return;
        }
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        if (!node->is_object() && !node->is_null()) {
            errors.push_back("override \"" + assignment +
                             "\": path crosses a non-object value");
            return;
        }
        pos = dot + 1;
    }
}

void semantic_checks(RunConfig& config, std::vector<std::string>& errors) {
    auto check = [&](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            errors.push_back(std::string(what) + ": " + e.what());
        }
    };
    if (!config.seed_set) {
        errors.push_back("seed: required (set it in the config or pass --seed)");
    }
    check("teacher", [&] { validate_model_config(config.teacher); });
    check("student", [&] { validate_model_config(config.student); });
    config.train.seed = config.seed;
    config.train.policy = config.policy;
    check("train", [&] { validate_train_config(config.train); });
    check("buckets", [&] { validate_buckets(config.buckets); });
    check("corpus.vocab_size",
          [&] { Vocab::default_vocab(config.corpus.vocab_size); });
    const double fsum = config.corpus.fractions.train +
                        config.corpus.fractions.validation +
                        config.corpus.fractions.test;
    if (std::abs(fsum - 1.0) > 1e-9) {
        errors.push_back("corpus fractions: must sum to 1");
    }
    if (config.teacher.vocab_size != config.corpus.vocab_size ||
        config.student.vocab_size != config.corpus.vocab_size) {
        errors.push_back(
            "vocab_size: teacher, student and corpus must agree");
    }
    if (config.corpus.context_len > config.teacher.context_len ||
        config.corpus.context_len > config.student.context_len) {
        errors.push_back(
            "corpus.context_len: exceeds a model's context window");
    }
    const std::set<std::string> axes = {"decay_factor", "strategy", "divergence"};
    if (!axes.contains(config.sweep.axis)) {
        errors.push_back("sweep.axis: must be decay_factor, strategy or divergence");
    }
    for (double l : config.sweep.lambdas) {
        if (!(l > 0.0)) errors.push_back("sweep.lambdas: must be positive");
    }
    for (const auto& s : config.sweep.strategies) {
        if (s != "mixin" && s != "random") {
            check("sweep.strategies", [&] { schedule_from_name(s); });
        }
    }
    for (const auto& d : config.sweep.divergences) {
        check("sweep.divergences", [&] { divergence_kind_from_name(d); });
    }
}

}  // namespace

std::filesystem::path RunConfig::corpus_dir() const {
    return corpus.dir.empty() ? std::filesystem::path(out_dir) / "corpus"
                              : std::filesystem::path(corpus.dir);
}

std::filesystem::path RunConfig::teacher_ckpt_path() const {
    return teacher_ckpt.empty() ? std::filesystem::path(out_dir) / "teacher.ckpt"
                                : std::filesystem::path(teacher_ckpt);
}

std::filesystem::path RunConfig::student_ckpt_path() const {
    return student_ckpt.empty() ? std::filesystem::path(out_dir) / "student.ckpt"
                                : std::filesystem::path(student_ckpt);
}

std::string default_out_dir() {
    const char* env = std::getenv(kOutDirEnvVar);
    return env && *env ? env : "out";
}

RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides) {
    json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded()) {
        throw ConfigError("config is not valid JSON");
    }
    if (!root.is_object()) {
        throw ConfigError("config must be a JSON object");
    }

    std::vector<std::string> errors;
    for (const auto& assignment : overrides) {
        apply_override(root, assignment, errors);
    }

    RunConfig config;
    config.corpus.tasks = default_task_specs();
    config.out_dir = default_out_dir();

    Obj o(root, "", errors);
    o.u64("seed", config.seed, config.seed_set);
    o.str("out_dir", config.out_dir);
    if (const json* t = o.object("teacher")) {
        parse_model(*t, "teacher", config.teacher, errors);
    }
    if (const json* s = o.object("student")) {
        parse_model(*s, "student", config.student, errors);
    }
    if (const json* t = o.object("train")) parse_train(*t, config, errors);
    if (const json* p = o.object("policy")) {
        parse_policy(*p, "policy", config.policy, errors);
    }
    if (const json* b = o.object("buckets")) {
        parse_buckets(*b, config.buckets, errors);
    }
    if (const json* c = o.object("corpus")) {
        parse_corpus(*c, config.corpus, errors);
    }
    if (const json* e = o.object("eval")) parse_eval(*e, config.eval, errors);
    if (const json* s = o.object("sweep")) parse_sweep(*s, config.sweep, errors);
    o.str("teacher_ckpt", config.teacher_ckpt);
    o.str("student_ckpt", config.student_ckpt);
    o.done();

    semantic_checks(config, errors);

    if (!errors.empty()) {
        std::string message = "invalid configuration:";
        for (const auto& e : errors) message += "\n  - " + e;
        throw ConfigError(message);
    }
    return config;
}

std::string run_config_to_json(const RunConfig& config) {
    json j;
    j["seed"] = config.seed;
    j["out_dir"] = config.out_dir;
    auto model_json = [](const ModelConfig& m) {
        return json{{"vocab_size", m.vocab_size},
                    {"embed_dim", m.embed_dim},
                    {"hidden_dim", m.hidden_dim},
                    {"context_len", m.context_len},
                    {"arch", arch_name(m.arch)}};
    };
    j["teacher"] = model_json(config.teacher);
    j["student"] = model_json(config.student);
    j["train"] = {
        {"method", method_name(config.train.method)},
        {"divergence",
         {{"kind", divergence_kind_name(config.train.divergence.kind)},
          {"weight", config.train.divergence.weight},
          {"log_base", log_base_name(config.train.divergence.log_base)}}},
        {"mix_ratio", config.train.mix_ratio},
        {"lm_loss_weight", config.train.lm_loss_weight},
        {"epochs", config.train.epochs},
        {"teacher_epochs", config.teacher_epochs},
        {"init_epochs", config.init_epochs},
        {"batch_size", config.train.batch_size},
        {"learning_rate", config.train.learning_rate},
        {"eval_every", config.train.eval_every},
    };
    j["policy"] = {
        {"kind", policy_name(config.policy.kind)},
        {"schedule",
         {{"kind", schedule_name(config.policy.schedule.kind)},
          {"tau0", config.policy.schedule.tau0},
          {"lambda", config.policy.schedule.lambda},
          {"max_len", config.policy.schedule.max_len},
          {"constant", config.policy.schedule.constant}}},
        {"alpha", config.policy.alpha},
        {"p_teacher", config.policy.p_teacher},
        {"temperature", config.policy.temperature},
        {"max_new_tokens", config.policy.max_new_tokens},
    };
    j["buckets"] = {{"boundaries", config.buckets.boundaries}};
    json tasks = json::array();
    for (const auto& t : config.corpus.tasks) {
        tasks.push_back({{"family", family_name(t.family)},
                         {"min_len", t.min_len},
                         {"max_len", t.max_len},
                         {"count", t.count}});
    }
    j["corpus"] = {
        {"dir", config.corpus.dir},
        {"vocab_size", config.corpus.vocab_size},
        {"context_len", config.corpus.context_len},
        {"tasks", std::move(tasks)},
        {"train_fraction", config.corpus.fractions.train},
        {"validation_fraction", config.corpus.fractions.validation},
        {"test_fraction", config.corpus.fractions.test},
    };
    j["eval"] = {{"seeds", config.eval.seeds},
                 {"max_new_tokens", config.eval.max_new_tokens},
                 {"misguidance_items", config.eval.misguidance_items}};
    j["sweep"] = {{"axis", config.sweep.axis},
                  {"lambdas", config.sweep.lambdas},
                  {"strategies", config.sweep.strategies},
                  {"divergences", config.sweep.divergences},
                  {"epochs", config.sweep.epochs}};
    j["teacher_ckpt"] = config.teacher_ckpt;
    j["student_ckpt"] = config.student_ckpt;
    return j.dump(2) + "\n";
}

}  // namespace kdlab
