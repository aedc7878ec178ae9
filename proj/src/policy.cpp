#include "kdlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace kdlab {

std::string schedule_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::kExpDecay: return "exp_decay";
        case ScheduleKind::kLinearDecrease: return "linear_decrease";
        case ScheduleKind::kExpGrowth: return "exp_growth";
        case ScheduleKind::kConstant: return "constant";
    }
    throw std::invalid_argument("bad schedule kind");
}

ScheduleKind schedule_from_name(const std::string& name) {
    if (name == "exp_decay") return ScheduleKind::kExpDecay;
    if (name == "linear_decrease") return ScheduleKind::kLinearDecrease;
    if (name == "exp_growth") return ScheduleKind::kExpGrowth;
    if (name == "constant") return ScheduleKind::kConstant;
    throw std::invalid_argument("unknown threshold schedule: \"" + name + "\"");
}

void validate_schedule(const ThresholdSchedule& schedule) {
    if (!(schedule.tau0 >= 0.0 && schedule.tau0 <= 1.0)) {
        throw std::invalid_argument("schedule tau0 must lie in [0, 1]");
    }
    if (!(schedule.lambda >= 0.0) || !std::isfinite(schedule.lambda)) {
        throw std::invalid_argument("schedule lambda must be >= 0");
    }
    if (schedule.max_len < 1) {
        throw std::invalid_argument("schedule max_len must be >= 1");
    }
    if (!(schedule.constant >= 0.0 && schedule.constant <= 1.0)) {
        throw std::invalid_argument("schedule constant must lie in [0, 1]");
    }
}

double threshold_at(const ThresholdSchedule& schedule, int t) {
    if (t < 0) throw std::invalid_argument("step index must be >= 0");
    double tau = 0.0;
    switch (schedule.kind) {
        case ScheduleKind::kExpDecay:
            tau = schedule.tau0 * std::exp(-schedule.lambda * t);
            break;
        case ScheduleKind::kLinearDecrease:
            tau = schedule.tau0 *
                  std::max(0.0, 1.0 - static_cast<double>(t) / schedule.max_len);
            break;
        case ScheduleKind::kExpGrowth:
            tau = schedule.tau0 * (1.0 - std::exp(-schedule.lambda * t));
            break;
        case ScheduleKind::kConstant:
            tau = schedule.constant;
            break;
    }
    return std::clamp(tau, 0.0, 1.0);
}

std::string policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::kSgo: return "sgo";
        case PolicyKind::kTeacherOnly: return "teacher_only";
        case PolicyKind::kSwitch: return "switch";
        case PolicyKind::kMixin: return "mixin";
        case PolicyKind::kRandom: return "random";
    }
    throw std::invalid_argument("bad policy kind");
}

PolicyKind policy_from_name(const std::string& name) {
    if (name == "sgo") return PolicyKind::kSgo;
    if (name == "teacher_only") return PolicyKind::kTeacherOnly;
    if (name == "switch") return PolicyKind::kSwitch;
    if (name == "mixin") return PolicyKind::kMixin;
    if (name == "random") return PolicyKind::kRandom;
    throw std::invalid_argument("unknown generation policy: \"" + name + "\"");
}

void validate_policy(const PolicySpec& spec) {
    validate_schedule(spec.schedule);
    if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) {
        throw std::invalid_argument("policy alpha must lie in [0, 1]");
    }
    if (!(spec.p_teacher >= 0.0 && spec.p_teacher <= 1.0)) {
        throw std::invalid_argument("policy p_teacher must lie in [0, 1]");
    }
    if (!(spec.temperature > 0.0) || !std::isfinite(spec.temperature)) {
        throw std::invalid_argument("policy temperature must be positive");
    }
    if (spec.max_new_tokens < 0) {
        throw std::invalid_argument("policy max_new_tokens must be >= 0");
    }
}

GenRngs GenRngs::derive(std::uint64_t master, std::uint64_t k0, std::uint64_t k1) {
    return GenRngs{
        SeededRng::derive(master, RngRole::kStudentSample, k0, k1),
        SeededRng::derive(master, RngRole::kTeacherSample, k0, k1),
        SeededRng::derive(master, RngRole::kPolicyChoice, k0, k1),
    };
}

namespace {

constexpr double kStudentSentinelJsd = 0.0;
constexpr double kStudentSentinelThreshold = 1.0;
constexpr double kTeacherSentinelJsd = 1.0;
constexpr double kTeacherSentinelThreshold = 0.0;

bool needs_teacher(PolicyKind kind) { return kind != PolicyKind::kSgo; }

}  // namespace

GenerationTrace generate(const ModelParams& teacher, const ModelParams& student,
                         std::span<const int> prompt, const PolicySpec& spec,
                         GenRngs& rngs, int eos_id) {
    validate_policy(spec);
    if (eos_id < 0 || eos_id >= student.config.vocab_size) {
        throw std::invalid_argument("eos id outside student vocabulary");
    }
    if (needs_teacher(spec.kind) &&
        teacher.config.vocab_size != student.config.vocab_size) {
        throw std::invalid_argument(
            "teacher and student vocabularies differ in size");
    }
    const int student_ctx = student.config.context_len;
    const int teacher_ctx =
        needs_teacher(spec.kind) ? teacher.config.context_len : student_ctx;
    const int ctx = std::min(student_ctx, teacher_ctx);
    if (static_cast<int>(prompt.size()) > ctx) {
        throw std::invalid_argument("prompt does not fit the context window");
    }

    GenerationTrace trace;
    trace.prompt.assign(prompt.begin(), prompt.end());
    trace.terminated_by = Termination::kMaxLen;

    auto student_state = init_decoder(student);
    auto teacher_state = init_decoder(teacher);
    for (int tok : prompt) {
        decoder_advance(student, student_state, tok);
        if (needs_teacher(spec.kind)) decoder_advance(teacher, teacher_state, tok);
    }

    int consumed = static_cast<int>(prompt.size());
    for (int t = 0; t < spec.max_new_tokens; ++t) {
        const ProbVector q =
            softmax(decoder_logits(student, student_state), spec.temperature);
        ProbVector p;
        if (needs_teacher(spec.kind)) {
            p = softmax(decoder_logits(teacher, teacher_state), spec.temperature);
        }

        TraceStep step;
        int token = -1;
        switch (spec.kind) {
            case PolicyKind::kSgo: {
                token = sample_categorical(q, rngs.student);
                step = {TokenSource::kStudent, kStudentSentinelJsd,
                        kStudentSentinelThreshold};
                break;
            }
            case PolicyKind::kTeacherOnly: {
                token = sample_categorical(p, rngs.teacher);
                step = {TokenSource::kTeacher, kTeacherSentinelJsd,
                        kTeacherSentinelThreshold};
                break;
            }
            case PolicyKind::kSwitch: {
                const double div = jsd(p, q);
                const double tau = threshold_at(spec.schedule, t);
                if (div <= tau) {
                    token = sample_categorical(q, rngs.student);
                    step = {TokenSource::kStudent, div, tau};
                } else {
                    token = sample_categorical(p, rngs.teacher);
                    step = {TokenSource::kTeacher, div, tau};
                }
                break;
            }
            case PolicyKind::kMixin: {
                const ProbVector mixed = mix(spec.alpha, p, q);
                token = sample_categorical(mixed, rngs.choice);
                step = {TokenSource::kStudent, kStudentSentinelJsd,
                        kStudentSentinelThreshold};
                break;
            }
            case PolicyKind::kRandom: {
                const bool use_teacher = rngs.choice.next_uniform() < spec.p_teacher;
                if (use_teacher) {
                    token = sample_categorical(p, rngs.teacher);
                    step = {TokenSource::kTeacher, kTeacherSentinelJsd,
                            kTeacherSentinelThreshold};
                } else {
                    token = sample_categorical(q, rngs.student);
                    step = {TokenSource::kStudent, kStudentSentinelJsd,
                            kStudentSentinelThreshold};
                }
                break;
            }
        }

        trace.tokens.push_back(token);
        trace.steps.push_back(step);
        if (token == eos_id) {
            trace.terminated_by = Termination::kEos;
            break;
        }
        if (consumed >= ctx) {
            // No room to condition on this token; cut the sequence here.
            trace.terminated_by = Termination::kMaxLen;
            break;
        }
        decoder_advance(student, student_state, token);
        if (needs_teacher(spec.kind)) decoder_advance(teacher, teacher_state, token);
        ++consumed;
    }
    return trace;
}

std::pair<double, double> intervention_ratio(
    const std::vector<GenerationTrace>& traces) {
    if (traces.empty()) {
        throw std::invalid_argument("intervention_ratio needs at least one trace");
    }
    std::size_t total = 0, teacher = 0;
    for (const auto& trace : traces) {
        total += trace.steps.size();
        for (const auto& step : trace.steps) {
            if (step.source == TokenSource::kTeacher) ++teacher;
        }
    }
    if (total == 0) {
        throw std::invalid_argument("intervention_ratio needs generated tokens");
    }
    const double teacher_frac =
        static_cast<double>(teacher) / static_cast<double>(total);
    return {1.0 - teacher_frac, teacher_frac};
}

std::string trace_to_json_line(const GenerationTrace& trace) {
    nlohmann::json j;
    j["prompt"] = trace.prompt;
    j["tokens"] = trace.tokens;
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : trace.steps) {
        steps.push_back({
            {"source", step.source == TokenSource::kStudent ? "student" : "teacher"},
            {"jsd", step.jsd},
            {"threshold", step.threshold},
        });
    }
    j["steps"] = std::move(steps);
    j["terminated_by"] =
        trace.terminated_by == Termination::kEos ? "eos" : "max_len";
    return j.dump();
}

void write_traces(const std::filesystem::path& path,
                  const std::vector<GenerationTrace>& traces) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot open trace file for writing: " + path.string());
    for (const auto& trace : traces) f << trace_to_json_line(trace) << "\n";
    if (!f) throw FormatError("failed writing trace file: " + path.string());
}

}  // namespace kdlab
