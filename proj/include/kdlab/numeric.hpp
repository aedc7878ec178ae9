#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

// Dense numeric kernel: matrices, seeded RNG streams, stable softmax and
// log-domain helpers, categorical sampling, and a finite-difference gradient
// checker. Everything runs in 64-bit floating point.

namespace kdlab {

using LogitsVector = std::vector<double>;

// Probability distribution over the vocabulary at one decoding step.
struct ProbVector {
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
    // Entries nonnegative and summing to 1 within `sum_tol`.
    bool is_valid(double sum_tol = 1e-9) const;
};

// Row-major dense matrix. Bias vectors are stored as 1 x n matrices.
struct DenseMatrix {
    std::size_t rows{0};
    std::size_t cols{0};
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }
    std::size_t count() const { return data.size(); }
    bool same_shape(const DenseMatrix& o) const {
        return rows == o.rows && cols == o.cols;
    }
    bool all_finite() const;
};

// Logical roles for derived RNG streams. Each role gets an independent stream
// from the master seed so changing one policy does not perturb the others'
// randomness.
enum class RngRole : std::uint64_t {
    kCorpusGen = 1,
    kSplit = 2,
    kInitTeacher = 3,
    kInitStudent = 4,
    kShuffle = 5,
    kMixChoice = 6,
    kStudentSample = 7,
    kTeacherSample = 8,
    kPolicyChoice = 9,
    kEval = 10,
    kValidation = 11,
    kMisguidance = 12,
    kAuxLm = 13,
};

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic RNG stream: identical seed + identical call sequence gives
// identical outputs on every platform (mt19937_64 plus hand-rolled uniform
// conversion; std distributions are not portable across implementations).
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    // Stream derived from a master seed, a role, and optional substream keys
    // (epoch, item index, ...). Pure function of its inputs.
    static SeededRng derive(std::uint64_t master, RngRole role,
                            std::uint64_t k0 = 0, std::uint64_t k1 = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return gen_(); }
    // Uniform in [0, 1) with 53 random bits.
    double next_uniform();
    double next_uniform(double lo, double hi);
    // Unbiased integer in [0, n), rejection sampled.
    std::uint64_t next_below(std::uint64_t n);

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

// softmax(logits / temperature) with max-subtraction. Rejects non-finite
// logits and temperature <= 0. Output sums to 1 within 1e-12 and preserves
// the argmax of the input.
ProbVector softmax(const LogitsVector& logits, double temperature = 1.0);

// log(max(x, floor)) for x >= 0. Negative x is rejected.
double log_stable(double x, double floor_value);

// Inverse-CDF draw over the stored order using a single uniform.
// Rejects inputs whose mass is off 1 by more than 1e-6 or negative.
int sample_categorical(const ProbVector& p, SeededRng& rng);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& analytic_grad,
                  const std::vector<double>& theta, double epsilon);

}  // namespace kdlab
