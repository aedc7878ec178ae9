#include "kdlab/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kdlab/config.hpp"

namespace kdlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt_full(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }
double pct1(double fraction) { return round1(fraction * 100.0); }

std::string fmt_1dp(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", x);
    return buf;
}

bool is_1dp_column(const std::string& name) {
    return name.size() >= 4 && name.compare(name.size() - 4, 4, "_1dp") == 0;
}

void require_dir(const fs::path& dir, const std::string& what) {
    if (!fs::is_directory(dir)) {
        throw CliError(what + " does not exist: " + dir.string());
    }
}

void require_file(const fs::path& path, const std::string& what,
                  const std::string& hint) {
    if (!fs::is_regular_file(path)) {
        throw CliError("missing " + what + ": " + path.string() + " (" + hint +
                       ")");
    }
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw CliError("cannot create directory: " + dir.string());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw CliError("cannot write file: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError("cannot read config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string seed;
    std::string out;
};

RunConfig build_config(const CommonOpts& opts) {
    std::string text = "{}";
    if (!opts.config_path.empty()) text = read_text(opts.config_path);
    std::vector<std::string> overrides = opts.sets;
    if (!opts.seed.empty()) overrides.push_back("seed=" + opts.seed);
    if (!opts.out.empty()) {
        overrides.push_back("out_dir=" + json(opts.out).dump());
    }
    return parse_run_config(text, overrides);
}

std::vector<Example> load_split(const RunConfig& config, const Vocab& vocab,
                                const char* name) {
    const fs::path path = config.corpus_dir() / (std::string(name) + ".jsonl");
    require_file(path, "corpus file", "run gen-corpus first");
    return load_jsonl(path, vocab);
}

ModelParams load_model(const fs::path& path, const std::string& what,
                       const std::string& hint, const Vocab& vocab,
                       int corpus_context) {
    require_file(path, what, hint);
    ModelParams params = load_checkpoint(path);
    if (params.config.vocab_size != vocab.size()) {
        throw CliError(what + " " + path.string() + ": vocab size " +
                       std::to_string(params.config.vocab_size) +
                       " does not match the corpus vocab " +
                       std::to_string(vocab.size()));
    }
    if (params.config.context_len < corpus_context) {
        throw CliError(what + " " + path.string() + ": context window " +
                       std::to_string(params.config.context_len) +
                       " is shorter than the corpus context " +
                       std::to_string(corpus_context));
    }
    return params;
}

json model_json(const ModelConfig& m) {
    return json{{"arch", arch_name(m.arch)},
                {"vocab_size", m.vocab_size},
                {"embed_dim", m.embed_dim},
                {"hidden_dim", m.hidden_dim},
                {"context_len", m.context_len}};
}

json bucket_scores_json(const LengthBucketSpec& buckets, const EvalResult& res) {
    json arr = json::array();
    const auto labels = buckets.labels();
    for (std::size_t b = 0; b < labels.size(); ++b) {
        arr.push_back({{"label", labels[b]},
                       {"count", res.bucket_counts[b]},
                       {"rougeL", res.per_bucket[b]},
                       {"rougeL_pct_1dp", pct1(res.per_bucket[b])}});
    }
    return arr;
}

// Student initialization shared by distill and sweep: seeded fresh weights
// plus a short supervised warmup so generation-based methods start from a
// model that can already emit plausible tokens.
ModelParams warm_student(const RunConfig& config, const ModelParams& teacher,
                         const std::vector<Example>& train_set,
                         const std::vector<Example>& val_set,
                         const Vocab& vocab) {
    SeededRng init_rng = SeededRng::derive(config.seed, RngRole::kInitStudent);
    ModelParams student = ModelParams::init(config.student, init_rng);
    if (config.init_epochs > 0) {
        TrainConfig warm = config.train;
        warm.method = TrainMethod::kSft;
        warm.epochs = config.init_epochs;
        warm.eval_every = 0;
        auto run = run_distillation(teacher, student, warm, train_set, val_set,
                                    vocab);
        student = std::move(run.final_state.student);
    }
    return student;
}

int cmd_gen_corpus(const RunConfig& config) {
    const fs::path dir = config.corpus_dir();
    if (dir.has_parent_path()) {
        require_dir(dir.parent_path(), "output directory");
    }
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    SeededRng gen_rng = SeededRng::derive(config.seed, RngRole::kCorpusGen);
    const auto corpus = generate_corpus(config.corpus.tasks, vocab, gen_rng,
                                        config.corpus.context_len);
    SeededRng split_rng = SeededRng::derive(config.seed, RngRole::kSplit);
    const CorpusSplit splits =
        split(corpus, config.corpus.fractions, split_rng, vocab.eos_id);
    make_dir(dir);
    save_jsonl(splits.train, vocab, dir / "train.jsonl");
    save_jsonl(splits.validation, vocab, dir / "validation.jsonl");
    save_jsonl(splits.test, vocab, dir / "test.jsonl");
    std::cout << "gen-corpus: " << corpus.size() << " examples -> "
              << dir.string() << " (train " << splits.train.size()
              << ", validation " << splits.validation.size() << ", test "
              << splits.test.size() << ")\n";
    return 0;
}

int cmd_train_teacher(const RunConfig& config) {
    require_dir(config.out_dir, "output directory");
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    const auto train_set = load_split(config, vocab, "train");
    const auto val_set = load_split(config, vocab, "validation");

    TrainConfig tc = config.train;
    tc.epochs = config.teacher_epochs;
    ExperimentReport report;
    const ModelParams teacher =
        train_teacher(config.teacher, tc, train_set, val_set, vocab, &report);
    save_checkpoint(teacher, config.teacher_ckpt_path());

    json j;
    j["method"] = "sft";
    j["epochs"] = config.teacher_epochs;
    j["steps"] = report.loss_per_step.size();
    j["final_loss"] = report.loss_per_step.empty()
                          ? json()
                          : json(report.loss_per_step.back());
    j["loss_per_step"] = report.loss_per_step;
    j["val_rougeL_per_epoch"] = report.val_rouge_per_epoch;
    j["best_val_rougeL"] = report.best_val_rouge;
    j["best_val_rougeL_pct_1dp"] = pct1(report.best_val_rouge);
    j["best_epoch"] = report.best_epoch;
    j["parameter_count"] = teacher.parameter_count();
    j["model"] = model_json(config.teacher);
    write_text(fs::path(config.out_dir) / "teacher_report.json",
               j.dump(2) + "\n");

    std::cout << "train-teacher: method=sft best_val_rougeL="
              << fmt_full(report.best_val_rouge) << " (epoch "
              << report.best_epoch << ") -> "
              << config.teacher_ckpt_path().string() << "\n";
    return 0;
}

int cmd_distill(const RunConfig& config, bool resume) {
    require_dir(config.out_dir, "output directory");
    const fs::path out(config.out_dir);
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    const auto train_set = load_split(config, vocab, "train");
    const auto val_set = load_split(config, vocab, "validation");
    const ModelParams teacher =
        load_model(config.teacher_ckpt_path(), "teacher checkpoint",
                   "run train-teacher first", vocab, config.corpus.context_len);

    const TrainConfig& tc = config.train;
    TrainState resumed;
    const TrainState* resume_from = nullptr;
    ModelParams student_init;
    if (resume) {
        require_dir(out / "student_state", "training state directory");
        resumed = load_train_state(out / "student_state");
        resume_from = &resumed;
        student_init = resumed.student;
    } else {
        student_init = warm_student(config, teacher, train_set, val_set, vocab);
    }

    DistillResult result =
        run_distillation(teacher, student_init, tc, train_set, val_set, vocab,
                         out / "train_log.csv", resume_from);
    save_checkpoint(result.best_student, config.student_ckpt_path());
    save_train_state(result.final_state, out / "student_state");

    std::size_t trace_count = 0;
    const bool generates = method_generates(tc.method);
    const PolicyKind traced_kind =
        effective_policy_kind(tc.method, config.policy.kind);
    if (generates) {
        PolicySpec trace_policy = config.policy;
        trace_policy.kind = traced_kind;
        std::vector<GenerationTrace> traces;
        const std::size_t n = std::min<std::size_t>(50, val_set.size());
        for (std::size_t i = 0; i < n; ++i) {
            SeededRng sub =
                SeededRng::derive(config.seed, RngRole::kValidation, i);
            GenRngs rngs = GenRngs::derive(sub.next_u64());
            traces.push_back(generate(teacher, result.best_student,
                                      prompt_of(val_set[i]), trace_policy,
                                      rngs, vocab.eos_id));
        }
        write_traces(out / "traces.jsonl", traces);
        trace_count = traces.size();
    }

    const ExperimentReport& rep = result.report;
    const double teacher_pct = pct1(rep.teacher_fraction);
    json j;
    j["method"] = method_name(tc.method);
    j["divergence"] = {
        {"kind", divergence_kind_name(tc.divergence.kind)},
        {"weight", tc.divergence.weight},
    };
    j["policy"] = generates ? json(policy_name(traced_kind)) : json();
    j["mix_ratio"] = tc.mix_ratio;
    j["epochs"] = tc.epochs;
    j["resumed"] = resume;
    j["steps"] = rep.loss_per_step.size();
    j["final_loss"] =
        rep.loss_per_step.empty() ? json() : json(rep.loss_per_step.back());
    j["val_rougeL_per_epoch"] = rep.val_rouge_per_epoch;
    j["best_val_rougeL"] = rep.best_val_rouge;
    j["best_val_rougeL_pct_1dp"] = pct1(rep.best_val_rouge);
    j["best_epoch"] = rep.best_epoch;
    j["teacher_fraction"] = rep.teacher_fraction;
    j["teacher_pct_1dp"] = teacher_pct;
    j["student_pct_1dp"] = round1(100.0 - teacher_pct);
    j["counters"] = {{"generated_items", rep.generated_items},
                     {"ground_truth_items", rep.ground_truth_items},
                     {"student_tokens", rep.student_tokens},
                     {"teacher_tokens", rep.teacher_tokens}};
    j["traces"] = trace_count;
    j["student"] = model_json(config.student);
    write_text(out / "distill_report.json", j.dump(2) + "\n");

    std::cout << "distill: method=" << method_name(tc.method)
              << " best_val_rougeL=" << fmt_full(rep.best_val_rouge)
              << " teacher_fraction=" << fmt_full(rep.teacher_fraction)
              << " -> " << config.student_ckpt_path().string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& config) {
    require_dir(config.out_dir, "output directory");
    const fs::path out(config.out_dir);
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    const auto test_set = load_split(config, vocab, "test");
    const ModelParams student =
        load_model(config.student_ckpt_path(), "student checkpoint",
                   "run distill first", vocab, config.corpus.context_len);

    const EvalResult res = evaluate_model(
        student, test_set, config.buckets, vocab, config.seed,
        config.eval.seeds, config.eval.max_new_tokens, /*greedy=*/false);

    json j;
    j["seeds"] = config.eval.seeds;
    j["protocol"] = "ROUGE-L F1 averaged over " +
                    std::to_string(config.eval.seeds) +
                    " sampled responses per prompt, temperature 1.0";
    j["items"] = test_set.size();
    j["overall_rougeL"] = res.overall;
    j["overall_rougeL_pct_1dp"] = pct1(res.overall);
    j["buckets"] = bucket_scores_json(config.buckets, res);
    j["model"] = model_json(student.config);
    write_text(out / "eval_report.json", j.dump(2) + "\n");

    const auto labels = config.buckets.labels();
    std::ostringstream csv;
    csv << "index,ref_length,bucket,rougeL\n";
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const int len = content_length(test_set[i], vocab.eos_id);
        csv << i << "," << len << "," << labels[config.buckets.bucket_of(len)]
            << "," << fmt_full(res.per_item[i]) << "\n";
    }
    write_text(out / "eval_items.csv", csv.str());

    std::cout << "evaluate: overall_rougeL=" << fmt_full(res.overall)
              << " over " << test_set.size() << " items ("
              << config.eval.seeds << " seeds) -> "
              << (out / "eval_report.json").string() << "\n";
    return 0;
}

int cmd_analyze_misguidance(const RunConfig& config) {
    require_dir(config.out_dir, "output directory");
    const fs::path out(config.out_dir);
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    auto examples = load_split(config, vocab, "train");
    if (static_cast<int>(examples.size()) > config.eval.misguidance_items) {
        examples.resize(config.eval.misguidance_items);
    }
    const ModelParams teacher =
        load_model(config.teacher_ckpt_path(), "teacher checkpoint",
                   "run train-teacher first", vocab, config.corpus.context_len);
    const ModelParams student =
        load_model(config.student_ckpt_path(), "student checkpoint",
                   "run distill first", vocab, config.corpus.context_len);

    PolicySpec policy_a = config.policy;
    policy_a.kind = PolicyKind::kSgo;
    PolicySpec policy_b = config.policy;
    policy_b.kind = PolicyKind::kSwitch;

    const MisguidanceResult mg = misguidance_analysis(
        teacher, student, examples, policy_a, policy_b, config.buckets,
        config.train.divergence, vocab, config.seed);

    const auto labels = config.buckets.labels();
    auto policy_json = [&](const char* name, const MisguidancePolicyResult& r) {
        json buckets_arr = json::array();
        for (std::size_t b = 0; b < labels.size(); ++b) {
            json cell = {{"label", labels[b]}, {"count", r.bucket_counts[b]}};
            if (r.coefficients[b].has_value()) {
                cell["spearman"] = *r.coefficients[b];
                cell["spearman_1dp"] = round1(*r.coefficients[b]);
            } else {
                cell["spearman"] = nullptr;
                cell["spearman_1dp"] = nullptr;
            }
            buckets_arr.push_back(cell);
        }
        return json{{"policy", name}, {"buckets", buckets_arr}};
    };

    json j;
    j["items"] = examples.size();
    j["divergence"] = divergence_kind_name(config.train.divergence.kind);
    j["policies"] =
        json::array({policy_json("sgo", mg.policy_a),
                     policy_json("switch", mg.policy_b)});
    write_text(out / "misguidance.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "index,sgo_length,sgo_rougeL,sgo_loss,switch_length,switch_rougeL,"
           "switch_loss\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        csv << i << "," << mg.policy_a.lengths[i] << ","
            << fmt_full(mg.policy_a.rouge[i]) << ","
            << fmt_full(mg.policy_a.loss[i]) << "," << mg.policy_b.lengths[i]
            << "," << fmt_full(mg.policy_b.rouge[i]) << ","
            << fmt_full(mg.policy_b.loss[i]) << "\n";
    }
    write_text(out / "misguidance_items.csv", csv.str());

    const std::size_t last = labels.size() - 1;
    auto show = [&](const std::optional<double>& c) {
        return c.has_value() ? fmt_full(*c) : std::string("absent");
    };
    std::cout << "analyze-misguidance: spearman[" << labels[last]
              << "] sgo=" << show(mg.policy_a.coefficients[last])
              << " switch=" << show(mg.policy_b.coefficients[last]) << " -> "
              << (out / "misguidance.json").string() << "\n";
    return 0;
}

std::string csv_safe(std::string text) {
    for (char& c : text) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return text;
}

int cmd_sweep(const RunConfig& config) {
    require_dir(config.out_dir, "output directory");
    const fs::path out(config.out_dir);
    const std::string& axis = config.sweep.axis;
    const Vocab vocab = Vocab::default_vocab(config.corpus.vocab_size);
    const auto train_set = load_split(config, vocab, "train");
    const auto val_set = load_split(config, vocab, "validation");
    const auto test_set = load_split(config, vocab, "test");
    const ModelParams teacher =
        load_model(config.teacher_ckpt_path(), "teacher checkpoint",
                   "run train-teacher first", vocab, config.corpus.context_len);
    const ModelParams base_student =
        warm_student(config, teacher, train_set, val_set, vocab);
    const int epochs =
        config.sweep.epochs >= 0 ? config.sweep.epochs : config.train.epochs;

    struct Cell {
        std::string label;
        TrainConfig tc;
        json meta;
    };
    std::vector<Cell> cells;
    if (axis == "decay_factor") {
        for (double lambda : config.sweep.lambdas) {
            TrainConfig tc = config.train;
            tc.method = TrainMethod::kSwitchDistill;
            tc.policy.kind = PolicyKind::kSwitch;
            tc.policy.schedule.kind = ScheduleKind::kExpDecay;
            tc.policy.schedule.lambda = lambda;
            cells.push_back({"lambda=" + fmt_full(lambda), tc,
                             json{{"lambda", lambda}}});
        }
    } else if (axis == "strategy") {
        for (const std::string& strategy : config.sweep.strategies) {
            TrainConfig tc = config.train;
            tc.method = TrainMethod::kSwitchDistill;
            if (strategy == "mixin") {
                tc.policy.kind = PolicyKind::kMixin;
            } else if (strategy == "random") {
                tc.policy.kind = PolicyKind::kRandom;
            } else {
                tc.policy.kind = PolicyKind::kSwitch;
                tc.policy.schedule.kind = schedule_from_name(strategy);
            }
            cells.push_back({"strategy=" + strategy, tc,
                             json{{"strategy", strategy}}});
        }
    } else {
        for (const std::string& name : config.sweep.divergences) {
            const DivergenceKind kind = divergence_kind_from_name(name);
            for (bool with_switch : {true, false}) {
                TrainConfig tc = config.train;
                tc.method = with_switch ? TrainMethod::kSwitchDistill
                                        : TrainMethod::kSgoDistill;
                tc.policy.kind = PolicyKind::kSwitch;
                tc.divergence.kind = kind;
                tc.divergence.weight = default_divergence_weight(kind);
                cells.push_back(
                    {name + (with_switch ? "+switch" : ""), tc,
                     json{{"divergence", name}, {"switch", with_switch}}});
            }
        }
    }

    const auto labels = config.buckets.labels();
    json rows = json::array();
    int failed_cells = 0;
    for (auto& cell : cells) {
        cell.tc.epochs = epochs;
        json row = cell.meta;
        try {
            DistillResult result = run_distillation(
                teacher, base_student, cell.tc, train_set, val_set, vocab);
            const EvalResult ev = evaluate_model(
                result.best_student, test_set, config.buckets, vocab,
                config.seed, config.eval.seeds, config.eval.max_new_tokens);
            const double teacher_pct = pct1(result.report.teacher_fraction);
            row["val_rougeL"] = result.report.best_val_rouge;
            row["test_rougeL"] = ev.overall;
            row["test_rougeL_pct_1dp"] = pct1(ev.overall);
            for (std::size_t b = 0; b < labels.size(); ++b) {
                row["test_rougeL_" + labels[b]] = ev.per_bucket[b];
            }
            row["teacher_fraction"] = result.report.teacher_fraction;
            row["teacher_pct_1dp"] = teacher_pct;
            row["student_pct_1dp"] = round1(100.0 - teacher_pct);
            row["failed"] = false;
            std::cout << "sweep[" << axis << "] " << cell.label
                      << ": test_rougeL=" << fmt_full(ev.overall)
                      << " teacher_pct=" << fmt_1dp(teacher_pct) << "\n";
        } catch (const std::exception& e) {
            row["failed"] = true;
            row["error"] = e.what();
            ++failed_cells;
            std::cout << "sweep[" << axis << "] " << cell.label << ": FAILED ("
                      << e.what() << ")\n";
        }
        rows.push_back(std::move(row));
    }

    json j;
    j["axis"] = axis;
    j["epochs"] = epochs;
    j["rows"] = rows;
    write_text(out / ("sweep_" + axis + ".json"), j.dump(2) + "\n");

    std::vector<std::string> key_cols;
    if (axis == "decay_factor") {
        key_cols = {"lambda"};
    } else if (axis == "strategy") {
        key_cols = {"strategy"};
    } else {
        key_cols = {"divergence", "switch"};
    }
    std::vector<std::string> value_cols = {"val_rougeL", "test_rougeL",
                                           "test_rougeL_pct_1dp"};
    for (const auto& label : labels) value_cols.push_back("test_rougeL_" + label);
    value_cols.insert(value_cols.end(),
                      {"teacher_fraction", "teacher_pct_1dp",
                       "student_pct_1dp"});

    std::ostringstream csv;
    for (std::size_t c = 0; c < key_cols.size(); ++c) {
        csv << (c ? "," : "") << key_cols[c];
    }
    for (const auto& col : value_cols) csv << "," << col;
    csv << ",failed,error\n";
    for (const auto& row : rows) {
        bool first = true;
        for (const auto& col : key_cols) {
            if (!first) csv << ",";
            first = false;
            const json& v = row.at(col);
            if (v.is_number()) {
                csv << fmt_full(v.get<double>());
            } else if (v.is_boolean()) {
                csv << (v.get<bool>() ? "true" : "false");
            } else {
                csv << csv_safe(v.get<std::string>());
            }
        }
        for (const auto& col : value_cols) {
            csv << ",";
            if (row.contains(col)) {
                const double v = row.at(col).get<double>();
                csv << (is_1dp_column(col) ? fmt_1dp(v) : fmt_full(v));
            }
        }
        csv << "," << (row.at("failed").get<bool>() ? "true" : "false") << ",";
        if (row.contains("error")) {
            csv << csv_safe(row.at("error").get<std::string>());
        }
        csv << "\n";
    }
    write_text(out / ("sweep_" + axis + ".csv"), csv.str());

    std::cout << "sweep[" << axis << "]: "
              << (rows.size() - static_cast<std::size_t>(failed_cells)) << "/"
              << rows.size() << " cells ok -> "
              << (out / ("sweep_" + axis + ".csv")).string() << "\n";
    return failed_cells > 0 ? 1 : 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Selective teacher-intervention distillation laboratory"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool resume = false;
    std::string axis;

    auto add_common = [&opts](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "Config JSON file");
        sub->add_option("--set", opts.sets,
                        "Override a config key: path.to.key=value");
        sub->add_option("--seed", opts.seed, "Master seed (overrides config)");
        sub->add_option("--out", opts.out,
                        "Output directory (overrides config)");
    };

    CLI::App* gen = app.add_subcommand(
        "gen-corpus", "Generate and split the synthetic corpus");
    add_common(gen);
    CLI::App* teach = app.add_subcommand(
        "train-teacher", "Supervised training of the teacher model");
    add_common(teach);
    CLI::App* dist =
        app.add_subcommand("distill", "Distill the teacher into a student");
    add_common(dist);
    dist->add_flag("--resume", resume, "Continue from the saved training state");
    CLI::App* eval = app.add_subcommand(
        "evaluate", "Multi-seed ROUGE-L evaluation on the test split");
    add_common(eval);
    CLI::App* misg = app.add_subcommand(
        "analyze-misguidance",
        "Correlate generation quality with distillation loss per policy");
    add_common(misg);
    CLI::App* sweep = app.add_subcommand(
        "sweep", "One distillation per axis value, merged comparison report");
    add_common(sweep);
    sweep->add_option("--axis", axis,
                      "Sweep axis: decay_factor, strategy or divergence");

    try {
        app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return cmd_gen_corpus(build_config(opts));
        if (teach->parsed()) return cmd_train_teacher(build_config(opts));
        if (dist->parsed()) return cmd_distill(build_config(opts), resume);
        if (eval->parsed()) return cmd_evaluate(build_config(opts));
        if (misg->parsed()) return cmd_analyze_misguidance(build_config(opts));
        if (sweep->parsed()) {
            if (!axis.empty()) opts.sets.push_back("sweep.axis=" + axis);
            return cmd_sweep(build_config(opts));
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace kdlab
