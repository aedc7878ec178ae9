#include "kdlab/divergence.hpp"

#include <cmath>
#include <stdexcept>

namespace kdlab {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void check_dims(const ProbVector& p, const ProbVector& q, const char* op) {
    if (p.size() != q.size() || p.size() == 0) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch");
    }
}

double base_scale(LogBase base) { return base == LogBase::kTwo ? 1.0 / kLn2 : 1.0; }

void check_unit_weight(double w, const char* op) {
    if (!(w > 0.0) || !(w < 1.0)) {
        throw std::invalid_argument(std::string(op) + ": weight must lie in (0,1)");
    }
}

}  // namespace

std::string divergence_kind_name(DivergenceKind kind) {
    switch (kind) {
        case DivergenceKind::kKL: return "kl";
        case DivergenceKind::kRKL: return "rkl";
        case DivergenceKind::kJSD: return "jsd";
        case DivergenceKind::kGJSD: return "gjsd";
        case DivergenceKind::kSKL: return "skl";
        case DivergenceKind::kSRKL: return "srkl";
    }
    return "unknown";
}

DivergenceKind divergence_kind_from_name(const std::string& name) {
    if (name == "kl") return DivergenceKind::kKL;
    if (name == "rkl") return DivergenceKind::kRKL;
    if (name == "jsd") return DivergenceKind::kJSD;
    if (name == "gjsd") return DivergenceKind::kGJSD;
    if (name == "skl") return DivergenceKind::kSKL;
    if (name == "srkl") return DivergenceKind::kSRKL;
    throw std::invalid_argument("unknown divergence kind: " + name);
}

double default_divergence_weight(DivergenceKind kind) {
    switch (kind) {
        case DivergenceKind::kGJSD: return 0.9;
        case DivergenceKind::kSKL:
        case DivergenceKind::kSRKL: return 0.1;
        default: return 0.5;
    }
}

double kl(const ProbVector& p, const ProbVector& q, LogBase base,
          double floor_value) {
    check_dims(p, q, "kl");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.p[i] <= 0.0) continue;
        sum += p.p[i] * (std::log(p.p[i]) - log_stable(q.p[i], floor_value));
    }
    return sum * base_scale(base);
}

double jsd(const ProbVector& p, const ProbVector& q) {
    check_dims(p, q, "jsd");
    // m_i >= p_i/2 (resp. q_i/2) wherever the numerator is nonzero, so no
    // flooring is needed and each log2 ratio is bounded by 1.
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p.p[i] + q.p[i]);
        if (p.p[i] > 0.0) sum += 0.5 * p.p[i] * (std::log(p.p[i]) - std::log(m));
        if (q.p[i] > 0.0) sum += 0.5 * q.p[i] * (std::log(q.p[i]) - std::log(m));
    }
    return sum / kLn2;
}

double generalized_jsd(const ProbVector& p, const ProbVector& q, double beta,
                       LogBase base) {
    check_dims(p, q, "generalized_jsd");
    check_unit_weight(beta, "generalized_jsd");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = beta * p.p[i] + (1.0 - beta) * q.p[i];
        if (p.p[i] > 0.0) sum += beta * p.p[i] * (std::log(p.p[i]) - std::log(m));
        if (q.p[i] > 0.0)
            sum += (1.0 - beta) * q.p[i] * (std::log(q.p[i]) - std::log(m));
    }
    return sum * base_scale(base);
}

double skew_kl(const ProbVector& p, const ProbVector& q, double alpha,
               bool reversed, LogBase base) {
    check_dims(p, q, "skew_kl");
    check_unit_weight(alpha, "skew_kl");
    const ProbVector& num = reversed ? q : p;
    const ProbVector& other = reversed ? p : q;
    // Mixture entry is at least alpha * num_i wherever num_i > 0, so every
    // term is finite without flooring.
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (num.p[i] <= 0.0) continue;
        const double m = alpha * num.p[i] + (1.0 - alpha) * other.p[i];
        sum += num.p[i] * (std::log(num.p[i]) - std::log(m));
    }
    return sum * base_scale(base);
}

double divergence_value(const ProbVector& p, const ProbVector& q,
                        const DivergenceSpec& spec) {
    switch (spec.kind) {
        case DivergenceKind::kKL: return kl(p, q, spec.log_base);
        case DivergenceKind::kRKL: return kl(q, p, spec.log_base);
        case DivergenceKind::kJSD:
            return spec.log_base == LogBase::kTwo ? jsd(p, q)
                                                  : generalized_jsd(p, q, 0.5);
        case DivergenceKind::kGJSD:
            return generalized_jsd(p, q, spec.weight, spec.log_base);
        case DivergenceKind::kSKL:
            return skew_kl(p, q, spec.weight, false, spec.log_base);
        case DivergenceKind::kSRKL:
            return skew_kl(p, q, spec.weight, true, spec.log_base);
    }
    throw std::invalid_argument("divergence_value: unsupported kind");
}

double sequence_divergence(const std::vector<ProbVector>& teacher_dists,
                           const std::vector<ProbVector>& student_dists,
                           const DivergenceSpec& spec) {
    if (teacher_dists.size() != student_dists.size() || teacher_dists.empty()) {
        throw std::invalid_argument(
            "sequence_divergence: lists must have equal length >= 1");
    }
    double sum = 0.0;
    for (std::size_t t = 0; t < teacher_dists.size(); ++t) {
        sum += divergence_value(teacher_dists[t], student_dists[t], spec);
    }
    return sum;
}

std::vector<double> divergence_grad_wrt_student_logits(
    const ProbVector& p, const LogitsVector& student_logits,
    const DivergenceSpec& spec) {
    if (p.size() != student_logits.size() || p.size() == 0) {
        throw std::invalid_argument(
            "divergence_grad_wrt_student_logits: dimension mismatch");
    }
    const std::size_t n = p.size();
    const ProbVector q = softmax(student_logits, 1.0);
    const double scale = base_scale(spec.log_base);

    // KL(p||q) collapses to the classic q - p.
    if (spec.kind == DivergenceKind::kKL) {
        std::vector<double> grad(n);
        for (std::size_t i = 0; i < n; ++i) grad[i] = (q.p[i] - p.p[i]) * scale;
        return grad;
    }

    // Everything else: dL/dq_k, then through the softmax Jacobian as
    // grad_j = q_j * (g_j - sum_k q_k g_k).
    std::vector<double> g(n, 0.0);
    switch (spec.kind) {
        case DivergenceKind::kRKL: {
            for (std::size_t k = 0; k < n; ++k) {
                if (q.p[k] <= 0.0) continue;
                g[k] = std::log(q.p[k]) - log_stable(p.p[k], kProbFloor) + 1.0;
            }
            break;
        }
        case DivergenceKind::kJSD:
        case DivergenceKind::kGJSD: {
            const double beta =
                spec.kind == DivergenceKind::kJSD ? 0.5 : spec.weight;
            check_unit_weight(beta, "divergence_grad_wrt_student_logits");
            for (std::size_t k = 0; k < n; ++k) {
                if (q.p[k] <= 0.0) continue;
                const double m = beta * p.p[k] + (1.0 - beta) * q.p[k];
                g[k] = (1.0 - beta) * (std::log(q.p[k]) - std::log(m));
            }
            break;
        }
        case DivergenceKind::kSKL: {
            const double alpha = spec.weight;
            check_unit_weight(alpha, "divergence_grad_wrt_student_logits");
            for (std::size_t k = 0; k < n; ++k) {
                if (p.p[k] <= 0.0) continue;
                const double s = alpha * p.p[k] + (1.0 - alpha) * q.p[k];
                g[k] = -(1.0 - alpha) * p.p[k] / s;
            }
            break;
        }
        case DivergenceKind::kSRKL: {
            const double alpha = spec.weight;
            check_unit_weight(alpha, "divergence_grad_wrt_student_logits");
            for (std::size_t k = 0; k < n; ++k) {
                if (q.p[k] <= 0.0) continue;
                const double r = alpha * q.p[k] + (1.0 - alpha) * p.p[k];
                g[k] = std::log(q.p[k]) - std::log(r) + 1.0 - alpha * q.p[k] / r;
            }
            break;
        }
        default:
            throw std::invalid_argument(
                "divergence_grad_wrt_student_logits: unsupported kind");
    }

    double inner = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (q.p[k] > 0.0) inner += q.p[k] * g[k];
    }
    std::vector<double> grad(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (q.p[j] > 0.0) grad[j] = q.p[j] * (g[j] - inner) * scale;
    }
    return grad;
}

ProbVector mix(double alpha, const ProbVector& p, const ProbVector& q) {
    check_dims(p, q, "mix");
    if (alpha < 0.0 || alpha > 1.0) {
        throw std::invalid_argument("mix: alpha must lie in [0,1]");
    }
    ProbVector out;
    out.p.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out.p[i] = alpha * p.p[i] + (1.0 - alpha) * q.p[i];
    }
    return out;
}

}  // namespace kdlab
