#pragma once

#include <string>
#include <vector>

#include "kdlab/numeric.hpp"

// Distribution-discrepancy functions used both for switching decisions and as
// training losses, plus their analytic gradients with respect to the student's
// pre-softmax logits.
//
// Conventions:
//  - Terms with p_i = 0 contribute 0 (0*log 0 := 0).
//  - Probabilities appearing in denominators are floored at kProbFloor, which
//    keeps sampling-induced hard zeros finite. Skew divergences never rely on
//    the floor when their weight is positive.
//  - The switching JSD uses base-2 logs so its range is exactly [0, 1];
//    training losses default to natural log.

namespace kdlab {

inline constexpr double kProbFloor = 1e-12;

enum class DivergenceKind { kKL, kRKL, kJSD, kGJSD, kSKL, kSRKL };
enum class LogBase { kTwo, kNatural };

struct DivergenceSpec {
    DivergenceKind kind{DivergenceKind::kSRKL};
    // beta for kGJSD, alpha for the skew variants; ignored by kKL/kRKL/kJSD.
    double weight{0.1};
    LogBase log_base{LogBase::kNatural};
};

std::string divergence_kind_name(DivergenceKind kind);
DivergenceKind divergence_kind_from_name(const std::string& name);

// Conventional weight per kind: 0.9 for kGJSD, 0.1 for the skew variants,
// 0.5 elsewhere (where it is ignored).
double default_divergence_weight(DivergenceKind kind);

// KL(p || q) = sum_i p_i (log p_i - log q_i), q floored.
double kl(const ProbVector& p, const ProbVector& q,
          LogBase base = LogBase::kNatural, double floor_value = kProbFloor);

// Jensen-Shannon divergence with midpoint mixture, base-2 logs, range [0, 1].
double jsd(const ProbVector& p, const ProbVector& q);

// beta * KL(p || m) + (1 - beta) * KL(q || m) with m = beta*p + (1-beta)*q.
// Reduces to jsd (up to log base) at beta = 0.5.
double generalized_jsd(const ProbVector& p, const ProbVector& q, double beta,
                       LogBase base = LogBase::kNatural);

// Forward: KL(p || alpha*p + (1-alpha)*q). Reversed: KL(q || alpha*q + (1-alpha)*p).
// Finite for alpha > 0 even on disjoint supports.
double skew_kl(const ProbVector& p, const ProbVector& q, double alpha,
               bool reversed, LogBase base = LogBase::kNatural);

// Per-step divergence selected by spec; p is the teacher, q the student.
double divergence_value(const ProbVector& p, const ProbVector& q,
                        const DivergenceSpec& spec);

// Sum over steps of the per-step divergence (token-level sequence loss).
double sequence_divergence(const std::vector<ProbVector>& teacher_dists,
                           const std::vector<ProbVector>& student_dists,
                           const DivergenceSpec& spec);

// Analytic gradient of divergence_value(p, softmax(student_logits), spec)
// with respect to the student logits. For KL this is q - p.
std::vector<double> divergence_grad_wrt_student_logits(
    const ProbVector& p, const LogitsVector& student_logits,
    const DivergenceSpec& spec);

// alpha*p + (1-alpha)*q; preserves validity.
ProbVector mix(double alpha, const ProbVector& p, const ProbVector& q);

}  // namespace kdlab
