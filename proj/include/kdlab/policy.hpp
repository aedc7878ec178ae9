#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kdlab/divergence.hpp"
#include "kdlab/model.hpp"

// Sequence-generation policies. The switching policy compares the per-step
// base-2 JSD between teacher and student next-token distributions against a
// scheduled threshold and lets whichever side wins emit the token. Baselines:
// pure student, pure teacher, distribution mix-in, random alternation.

namespace kdlab {

enum class ScheduleKind { kExpDecay, kLinearDecrease, kExpGrowth, kConstant };

std::string schedule_name(ScheduleKind kind);
ScheduleKind schedule_from_name(const std::string& name);

struct ThresholdSchedule {
    ScheduleKind kind{ScheduleKind::kExpDecay};
    double tau0{1.0};
    double lambda{0.1};
    int max_len{128};
    double constant{0.2};
};

void validate_schedule(const ThresholdSchedule& schedule);

// Threshold at generated-step index t (t = 0 is the first response token).
// exp_decay: tau0*exp(-lambda*t); linear_decrease: tau0*max(0, 1 - t/max_len);
// exp_growth: tau0*(1 - exp(-lambda*t)); constant: c. Clamped to [0, 1].
double threshold_at(const ThresholdSchedule& schedule, int t);

enum class PolicyKind { kSgo, kTeacherOnly, kSwitch, kMixin, kRandom };

std::string policy_name(PolicyKind kind);
PolicyKind policy_from_name(const std::string& name);

struct PolicySpec {
    PolicyKind kind{PolicyKind::kSwitch};
    ThresholdSchedule schedule;
    double alpha{0.2};        // mixin teacher weight
    double p_teacher{0.5};    // random policy
    double temperature{1.0};
    int max_new_tokens{128};
};

void validate_policy(const PolicySpec& spec);

enum class TokenSource { kStudent, kTeacher };
enum class Termination { kEos, kMaxLen };

struct TraceStep {
    TokenSource source{TokenSource::kStudent};
    double jsd{0.0};
    double threshold{1.0};
};

// One generated sequence with per-step provenance. Non-switch policies record
// sentinel (jsd, threshold) pairs, (0,1) for student steps and (1,0) for
// teacher steps, so `source == teacher iff jsd > threshold` holds for every
// trace regardless of policy.
struct GenerationTrace {
    std::vector<int> prompt;
    std::vector<int> tokens;
    std::vector<TraceStep> steps;
    Termination terminated_by{Termination::kMaxLen};
};

// Independent sampling streams so that switching policies does not perturb
// unrelated draws: student-emitted tokens consume only the student stream,
// teacher-emitted tokens the teacher stream, and policy-level choices
// (random alternation, mix-in sampling) a third.
struct GenRngs {
    SeededRng student;
    SeededRng teacher;
    SeededRng choice;

    static GenRngs derive(std::uint64_t master, std::uint64_t k0 = 0,
                          std::uint64_t k1 = 0);
};

GenerationTrace generate(const ModelParams& teacher, const ModelParams& student,
                         std::span<const int> prompt, const PolicySpec& spec,
                         GenRngs& rngs, int eos_id);

// Token-weighted (student fraction, teacher fraction) over all traces.
std::pair<double, double> intervention_ratio(
    const std::vector<GenerationTrace>& traces);

std::string trace_to_json_line(const GenerationTrace& trace);
void write_traces(const std::filesystem::path& path,
                  const std::vector<GenerationTrace>& traces);

}  // namespace kdlab
