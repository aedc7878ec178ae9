#include "kdlab/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace kdlab {

bool ProbVector::is_valid(double sum_tol) const {
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= sum_tol;
}

bool DenseMatrix::all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

SeededRng SeededRng::derive(std::uint64_t master, RngRole role,
                            std::uint64_t k0, std::uint64_t k1) {
    std::uint64_t s = splitmix64(master ^ 0x8d2f5c1a3e47b069ULL);
    s = splitmix64(s ^ static_cast<std::uint64_t>(role));
    s = splitmix64(s ^ k0);
    s = splitmix64(s ^ k1);
    return SeededRng(s);
}

double SeededRng::next_uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double SeededRng::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
}

std::uint64_t SeededRng::next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return x % n;
}

ProbVector softmax(const LogitsVector& logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("softmax: temperature must be positive");
    }
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty logits");
    }
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("softmax: non-finite logit");
        }
        max_logit = std::max(max_logit, v);
    }
    ProbVector out;
    out.p.resize(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.p[i] = std::exp((logits[i] - max_logit) / temperature);
        sum += out.p[i];
    }
    for (double& v : out.p) v /= sum;
    return out;
}

double log_stable(double x, double floor_value) {
    if (!(floor_value > 0.0)) {
        throw std::invalid_argument("log_stable: floor must be positive");
    }
    if (!(x >= 0.0)) {
        throw std::invalid_argument("log_stable: x must be nonnegative");
    }
    return std::log(std::max(x, floor_value));
}

int sample_categorical(const ProbVector& p, SeededRng& rng) {
    if (p.p.empty()) {
        throw std::invalid_argument("sample_categorical: empty distribution");
    }
    double sum = 0.0;
    for (double v : p.p) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::invalid_argument("sample_categorical: invalid probability entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("sample_categorical: probabilities do not sum to 1");
    }
    const double u = rng.next_uniform() * sum;
    double acc = 0.0;
    int last_nonzero = -1;
    for (std::size_t i = 0; i < p.p.size(); ++i) {
        if (p.p[i] > 0.0) last_nonzero = static_cast<int>(i);
        acc += p.p[i];
        if (u < acc) return static_cast<int>(i);
    }
    // Rounding pushed u past the accumulated mass; return the last live index.
    return last_nonzero;
}

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& analytic_grad,
                  const std::vector<double>& theta, double epsilon) {
    if (analytic_grad.size() != theta.size()) {
        throw std::invalid_argument("grad_check: gradient/theta size mismatch");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("grad_check: epsilon must be positive");
    }
    std::vector<double> probe = theta;
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + epsilon;
        const double f_plus = f(probe);
        probe[i] = theta[i] - epsilon;
        const double f_minus = f(probe);
        probe[i] = theta[i];
        const double fd = (f_plus - f_minus) / (2.0 * epsilon);
        const double rel = std::abs(analytic_grad[i] - fd) /
                           std::max(1.0, std::abs(analytic_grad[i]));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace kdlab
