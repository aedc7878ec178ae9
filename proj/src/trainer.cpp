#include "kdlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binio.hpp"

namespace kdlab {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

}  // namespace

std::string method_name(TrainMethod method) {
    switch (method) {
        case TrainMethod::kSft: return "sft";
        case TrainMethod::kKd: return "kd";
        case TrainMethod::kSeqKd: return "seqkd";
        case TrainMethod::kSgoDistill: return "sgo_distill";
        case TrainMethod::kSwitchDistill: return "switch_distill";
    }
    throw std::invalid_argument("bad training method");
}

TrainMethod method_from_name(const std::string& name) {
    if (name == "sft") return TrainMethod::kSft;
    if (name == "kd") return TrainMethod::kKd;
    if (name == "seqkd") return TrainMethod::kSeqKd;
    if (name == "sgo_distill") return TrainMethod::kSgoDistill;
    if (name == "switch_distill") return TrainMethod::kSwitchDistill;
    throw std::invalid_argument("unknown training method: \"" + name + "\"");
}

bool method_generates(TrainMethod method) {
    return method == TrainMethod::kSeqKd || method == TrainMethod::kSgoDistill ||
           method == TrainMethod::kSwitchDistill;
}

bool method_uses_cross_entropy(TrainMethod method) {
    return method == TrainMethod::kSft || method == TrainMethod::kSeqKd;
}

void validate_train_config(const TrainConfig& config) {
    if (!(config.mix_ratio >= 0.0 && config.mix_ratio <= 1.0)) {
        throw std::invalid_argument("mix_ratio must lie in [0, 1]");
    }
    if (!(config.lm_loss_weight >= 0.0) || !std::isfinite(config.lm_loss_weight)) {
        throw std::invalid_argument("lm_loss_weight must be >= 0");
    }
    if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        throw std::invalid_argument("learning_rate must be positive");
    }
    if (config.eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    validate_policy(config.policy);
    if (method_generates(config.method) && config.policy.max_new_tokens < 1) {
        throw std::invalid_argument(
            "generation-based methods need max_new_tokens >= 1");
    }
}

PolicyKind effective_policy_kind(TrainMethod method, PolicyKind configured) {
    switch (method) {
        case TrainMethod::kSeqKd: return PolicyKind::kTeacherOnly;
        case TrainMethod::kSgoDistill: return PolicyKind::kSgo;
        case TrainMethod::kSwitchDistill:
            // Interleaving strategies share the distillation loop, so any
            // two-model policy is accepted here; plain switch stays the
            // default.
            if (configured == PolicyKind::kMixin ||
                configured == PolicyKind::kRandom) {
                return configured;
            }
            return PolicyKind::kSwitch;
        default: return PolicyKind::kSgo;  // unused
    }
}

namespace {

void ensure_moments(TrainState& state) {
    if (!state.opt.m.empty()) return;
    for (const auto& block : state.student.blocks) {
        state.opt.m.emplace_back(block.rows, block.cols);
        state.opt.v.emplace_back(block.rows, block.cols);
    }
}

void accumulate(std::vector<DenseMatrix>& into,
                const std::vector<DenseMatrix>& grads) {
    for (std::size_t b = 0; b < into.size(); ++b) {
        for (std::size_t i = 0; i < into[b].data.size(); ++i) {
            into[b].data[i] += grads[b].data[i];
        }
    }
}

void adam_update(TrainState& state, const std::vector<DenseMatrix>& grads,
                 double learning_rate) {
    ensure_moments(state);
    auto& opt = state.opt;
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(opt.t));
    const double alpha = learning_rate * std::sqrt(bc2) / bc1;
    for (std::size_t b = 0; b < grads.size(); ++b) {
        auto& theta = state.student.blocks[b].data;
        auto& m = opt.m[b].data;
        auto& v = opt.v[b].data;
        const auto& g = grads[b].data;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            theta[i] -= alpha * m[i] / (std::sqrt(v[i]) + kAdamEps);
        }
    }
}

struct ItemWork {
    std::vector<int> prompt;
    std::vector<int> sequence;
    std::vector<std::vector<double>> logit_grads;  // unscaled
    double loss_sum{0.0};
};

// Cross-entropy of the sequence under the student, with logit gradients.
void ce_terms(const std::vector<LogitsVector>& logits,
              const std::vector<int>& sequence, ItemWork& work) {
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const ProbVector q = softmax(logits[t]);
        work.loss_sum += -log_stable(q.p[static_cast<std::size_t>(sequence[t])],
                                     kProbFloor);
        std::vector<double> g(q.p);
        g[static_cast<std::size_t>(sequence[t])] -= 1.0;
        work.logit_grads.push_back(std::move(g));
    }
}

void divergence_terms(const ModelParams& teacher,
                      const std::vector<LogitsVector>& logits,
                      const std::vector<int>& prompt,
                      const std::vector<int>& sequence,
                      const DivergenceSpec& spec, ItemWork& work) {
    const auto teacher_dists = forward_seq(teacher, prompt, sequence);
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const ProbVector q = softmax(logits[t]);
        work.loss_sum += divergence_value(teacher_dists[t], q, spec);
        work.logit_grads.push_back(
            divergence_grad_wrt_student_logits(teacher_dists[t], logits[t], spec));
    }
}

}  // namespace

namespace {

StepStats distill_step_impl(const ModelParams& teacher, TrainState& state,
                            const std::vector<Example>& batch,
                            const TrainConfig& config, const Vocab& vocab,
                            const std::vector<Example>& aux_batch) {
    ensure_moments(state);

    const auto step_key = static_cast<std::uint64_t>(state.step);
    auto mix_rng = SeededRng::derive(config.seed, RngRole::kMixChoice, step_key);

    PolicySpec policy = config.policy;
    policy.kind = effective_policy_kind(config.method, config.policy.kind);

    StepStats stats;
    std::vector<ItemWork> items;
    std::size_t main_tokens = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        ItemWork work;
        work.prompt = prompt_of(batch[i]);
        bool generated = false;
        if (method_generates(config.method)) {
            generated = mix_rng.next_uniform() < config.mix_ratio;
        }
        if (generated) {
            auto rngs = GenRngs::derive(config.seed, step_key, i);
            const auto trace = generate(teacher, state.student, work.prompt,
                                        policy, rngs, vocab.eos_id);
            work.sequence = trace.tokens;
            for (const auto& s : trace.steps) {
                if (s.source == TokenSource::kTeacher) {
                    ++stats.teacher_tokens;
                } else {
                    ++stats.student_tokens;
                }
            }
            ++stats.generated_items;
        } else {
            work.sequence = batch[i].response;
            ++stats.ground_truth_items;
        }
        if (work.sequence.empty()) continue;

        const auto logits =
            forward_seq_logits(state.student, work.prompt, work.sequence);
        if (method_uses_cross_entropy(config.method)) {
            ce_terms(logits, work.sequence, work);
        } else {
            divergence_terms(teacher, logits, work.prompt, work.sequence,
                             config.divergence, work);
        }
        main_tokens += work.sequence.size();
        items.push_back(std::move(work));
    }

    double loss = 0.0;
    std::vector<DenseMatrix> grads;
    for (const auto& block : state.student.blocks) {
        grads.emplace_back(block.rows, block.cols);
    }
    if (main_tokens > 0) {
        const double scale = 1.0 / static_cast<double>(main_tokens);
        for (auto& work : items) {
            loss += work.loss_sum * scale;
            for (auto& g : work.logit_grads) {
                for (auto& x : g) x *= scale;
            }
            accumulate(grads, backward(state.student, work.prompt, work.sequence,
                                       work.logit_grads));
        }
    }

    if (config.lm_loss_weight > 0.0 && !aux_batch.empty()) {
        std::size_t aux_tokens = 0;
        std::vector<ItemWork> aux_items;
        for (const auto& example : aux_batch) {
            ItemWork work;
            work.prompt = prompt_of(example);
            work.sequence = example.response;
            if (work.sequence.empty()) continue;
            const auto logits =
                forward_seq_logits(state.student, work.prompt, work.sequence);
            ce_terms(logits, work.sequence, work);
            aux_tokens += work.sequence.size();
            aux_items.push_back(std::move(work));
        }
        if (aux_tokens > 0) {
            const double scale =
                config.lm_loss_weight / static_cast<double>(aux_tokens);
            for (auto& work : aux_items) {
                loss += work.loss_sum * scale;
                for (auto& g : work.logit_grads) {
                    for (auto& x : g) x *= scale;
                }
                accumulate(grads, backward(state.student, work.prompt,
                                           work.sequence, work.logit_grads));
            }
        }
    }

    if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at step " +
                            std::to_string(state.step));
    }

    adam_update(state, grads, config.learning_rate);
    state.step += 1;
    state.loss_history.push_back(loss);
    state.generated_items += stats.generated_items;
    state.ground_truth_items += stats.ground_truth_items;
    state.student_tokens += stats.student_tokens;
    state.teacher_tokens += stats.teacher_tokens;
    stats.loss = loss;
    return stats;
}

}  // namespace

StepStats distill_step(const ModelParams& teacher, TrainState& state,
                       const std::vector<Example>& batch,
                       const TrainConfig& config, const Vocab& vocab,
                       const std::vector<Example>& aux_batch) {
    validate_train_config(config);
    if (batch.empty()) throw std::invalid_argument("empty training batch");
    try {
        return distill_step_impl(teacher, state, batch, config, vocab,
                                 aux_batch);
    } catch (const TrainingError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        // Numeric breakdown mid-step (non-finite logits, degenerate
        // distributions) surfaces with the step index attached.
        throw TrainingError("numeric failure at step " +
                            std::to_string(state.step) + ": " + e.what());
    }
}

namespace {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::vector<Example> make_aux_corpus(const TrainConfig& config,
                                     const Vocab& vocab) {
    if (config.lm_loss_weight <= 0.0) return {};
    const std::vector<TaskSpec> specs = {
        {TaskFamily::kCopy, 1, 8, 40},
        {TaskFamily::kArithSeq, 1, 30, 60},
    };
    auto rng = SeededRng::derive(config.seed, RngRole::kAuxLm);
    return generate_corpus(specs, vocab, rng);
}

}  // namespace

DistillResult run_distillation(const ModelParams& teacher,
                               const ModelParams& student_init,
                               const TrainConfig& config,
                               const std::vector<Example>& train_set,
                               const std::vector<Example>& val_set,
                               const Vocab& vocab,
                               const std::filesystem::path& csv_path,
                               const TrainState* resume_from) {
    validate_train_config(config);
    if (train_set.empty()) throw std::invalid_argument("empty training set");

    TrainState state;
    if (resume_from) {
        state = *resume_from;
    } else {
        state.student = student_init;
    }

    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path, resume_from ? std::ios::app : std::ios::trunc);
        if (!csv) {
            throw FormatError("cannot open training log: " + csv_path.string());
        }
        if (!resume_from) csv << "step,loss,val_rougeL,teacher_fraction\n";
    }

    const auto aux_corpus = make_aux_corpus(config, vocab);
    const LengthBucketSpec buckets;
    const int max_new = config.policy.max_new_tokens;

    auto validate_now = [&]() {
        return evaluate_model(state.student, val_set, buckets, vocab,
                              config.seed, 1, max_new, /*greedy=*/true)
            .overall;
    };

    ExperimentReport report;
    ModelParams best = state.student;
    double best_val = -1.0;
    int best_epoch = -1;

    const auto n = train_set.size();
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    for (int epoch = static_cast<int>(state.epochs_done); epoch < config.epochs;
         ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        auto shuffle_rng = SeededRng::derive(config.seed, RngRole::kShuffle,
                                             static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        }

        for (std::size_t start = 0; start < n; start += batch_size) {
            std::vector<Example> batch;
            for (std::size_t i = start; i < std::min(n, start + batch_size); ++i) {
                batch.push_back(train_set[order[i]]);
            }
            std::vector<Example> aux_batch;
            if (!aux_corpus.empty()) {
                for (std::size_t j = 0; j < 4; ++j) {
                    aux_batch.push_back(
                        aux_corpus[(static_cast<std::size_t>(state.step) * 4 + j) %
                                   aux_corpus.size()]);
                }
            }
            const auto stats =
                distill_step(teacher, state, batch, config, vocab, aux_batch);

            const bool epoch_end = start + batch_size >= n;
            const bool periodic = config.eval_every > 0 &&
                                  state.step % config.eval_every == 0;
            std::string val_field;
            double val_score = -1.0;
            if (!val_set.empty() && (epoch_end || periodic)) {
                val_score = validate_now();
                val_field = format_double(val_score);
            }
            if (csv.is_open()) {
                const int gen_tokens = stats.student_tokens + stats.teacher_tokens;
                csv << state.step << "," << format_double(stats.loss) << ","
                    << val_field << ",";
                if (gen_tokens > 0) {
                    csv << format_double(static_cast<double>(stats.teacher_tokens) /
                                         gen_tokens);
                }
                csv << "\n";
            }
            if (epoch_end) {
                report.val_rouge_per_epoch.push_back(val_set.empty() ? 0.0
                                                                     : val_score);
                if (!val_set.empty() && val_score > best_val) {
                    best_val = val_score;
                    best = state.student;
                    best_epoch = epoch;
                }
            }
        }
        state.epochs_done = epoch + 1;
    }

    if (val_set.empty() || best_epoch < 0) {
        best = state.student;
        best_val = 0.0;
    }
    report.loss_per_step = state.loss_history;
    report.best_val_rouge = std::max(best_val, 0.0);
    report.best_epoch = best_epoch;
    report.generated_items = state.generated_items;
    report.ground_truth_items = state.ground_truth_items;
    report.student_tokens = state.student_tokens;
    report.teacher_tokens = state.teacher_tokens;
    const auto gen_total = state.student_tokens + state.teacher_tokens;
    report.teacher_fraction =
        gen_total > 0 ? static_cast<double>(state.teacher_tokens) /
                            static_cast<double>(gen_total)
                      : 0.0;

    DistillResult result;
    result.best_student = std::move(best);
    result.final_state = std::move(state);
    result.report = std::move(report);
    return result;
}

ModelParams train_teacher(const ModelConfig& model_config,
                          const TrainConfig& config,
                          const std::vector<Example>& train_set,
                          const std::vector<Example>& val_set,
                          const Vocab& vocab, ExperimentReport* report) {
    validate_model_config(model_config);
    validate_train_config(config);
    auto init_rng = SeededRng::derive(config.seed, RngRole::kInitTeacher);
    ModelParams params = ModelParams::init(model_config, init_rng);
    if (config.epochs == 0) {
        if (report) *report = ExperimentReport{};
        return params;
    }
    TrainConfig sft = config;
    sft.method = TrainMethod::kSft;
    auto result = run_distillation(params, params, sft, train_set, val_set, vocab);
    if (report) *report = result.report;
    return result.best_student;
}

// --- persistence ---

namespace {

constexpr char kOptMagic[8] = {'K', 'D', 'O', 'P', 'T', 'I', 'M', '1'};
constexpr std::uint32_t kOptVersion = 1;

void put_blocks(std::string& out, const std::vector<DenseMatrix>& blocks) {
    binio::put_u32(out, static_cast<std::uint32_t>(blocks.size()));
    for (const auto& block : blocks) {
        binio::put_u64(out, block.rows);
        binio::put_u64(out, block.cols);
        for (double w : block.data) binio::put_f64(out, w);
    }
}

std::vector<DenseMatrix> read_blocks(binio::ByteReader& r) {
    const auto count = r.u32("block count");
    std::vector<DenseMatrix> blocks;
    for (std::uint32_t b = 0; b < count; ++b) {
        const auto rows = r.u64("block rows");
        const auto cols = r.u64("block cols");
        DenseMatrix m(rows, cols);
        r.need(m.count() * 8, "block data");
        for (auto& w : m.data) w = r.f64("block data");
        blocks.push_back(std::move(m));
    }
    return blocks;
}

}  // namespace

void save_train_state(const TrainState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_checkpoint(state.student, dir / "student.ckpt");

    std::string out;
    out.append(kOptMagic, sizeof(kOptMagic));
    binio::put_u32(out, kOptVersion);
    binio::put_u64(out, static_cast<std::uint64_t>(state.opt.t));
    binio::put_u64(out, static_cast<std::uint64_t>(state.step));
    binio::put_u64(out, static_cast<std::uint64_t>(state.epochs_done));
    binio::put_u64(out, static_cast<std::uint64_t>(state.generated_items));
    binio::put_u64(out, static_cast<std::uint64_t>(state.ground_truth_items));
    binio::put_u64(out, static_cast<std::uint64_t>(state.student_tokens));
    binio::put_u64(out, static_cast<std::uint64_t>(state.teacher_tokens));
    binio::put_u64(out, state.loss_history.size());
    for (double x : state.loss_history) binio::put_f64(out, x);
    put_blocks(out, state.opt.m);
    put_blocks(out, state.opt.v);

    const auto path = dir / "optimizer.bin";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open optimizer state for writing: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("failed writing optimizer state: " + path.string());
}

TrainState load_train_state(const std::filesystem::path& dir) {
    TrainState state;
    state.student = load_checkpoint(dir / "student.ckpt");

    const auto path = dir / "optimizer.bin";
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open optimizer state: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();
    binio::ByteReader r{buf};
    r.need(sizeof(kOptMagic), "magic");
    if (std::memcmp(buf.data(), kOptMagic, sizeof(kOptMagic)) != 0) {
        throw FormatError("not an optimizer state file: " + path.string());
    }
    r.pos = sizeof(kOptMagic);
    const auto version = r.u32("version");
    if (version != kOptVersion) {
        throw FormatError("unsupported optimizer state version " +
                          std::to_string(version));
    }
    state.opt.t = static_cast<std::int64_t>(r.u64("adam step"));
    state.step = static_cast<std::int64_t>(r.u64("train step"));
    state.epochs_done = static_cast<std::int64_t>(r.u64("epochs"));
    state.generated_items = static_cast<std::int64_t>(r.u64("generated items"));
    state.ground_truth_items = static_cast<std::int64_t>(r.u64("ground truth items"));
    state.student_tokens = static_cast<std::int64_t>(r.u64("student tokens"));
    state.teacher_tokens = static_cast<std::int64_t>(r.u64("teacher tokens"));
    const auto hist = r.u64("loss history length");
    state.loss_history.resize(hist);
    for (auto& x : state.loss_history) x = r.f64("loss history");
    state.opt.m = read_blocks(r);
    state.opt.v = read_blocks(r);
    if (r.pos != buf.size()) {
        throw FormatError("optimizer state has trailing bytes");
    }
    const auto expect = state.student.blocks.size();
    auto shape_ok = [&](const std::vector<DenseMatrix>& blocks) {
        if (blocks.empty()) return true;
        if (blocks.size() != expect) return false;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            if (!blocks[b].same_shape(state.student.blocks[b])) return false;
        }
        return true;
    };
    if (!shape_ok(state.opt.m) || !shape_ok(state.opt.v)) {
        throw FormatError("optimizer state does not match the checkpoint shapes");
    }
    return state;
}

}  // namespace kdlab
