#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdlab/corpus.hpp"
#include "kdlab/divergence.hpp"
#include "kdlab/policy.hpp"

// Metrics and analyses: token-level ROUGE-L, length-bucketed evaluation with
// multi-seed sampling, Spearman rank correlation, and the correlation study
// between generation quality and divergence loss.

namespace kdlab {

struct RougeScore {
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
};

// LCS-based overlap; P = lcs/|candidate|, R = lcs/|reference|, F1 harmonic.
RougeScore rouge_l(std::span<const int> candidate, std::span<const int> reference);

// Token-count buckets: boundaries {10, 50} yield 1-10, 11-50, 51+.
struct LengthBucketSpec {
    std::vector<int> boundaries{10, 50};

    int bucket_count() const { return static_cast<int>(boundaries.size()) + 1; }
    int bucket_of(int length) const;
    std::vector<std::string> labels() const;
};

void validate_buckets(const LengthBucketSpec& buckets);

// Pearson correlation of average-ranked values. Throws on length mismatch,
// fewer than two points, or zero rank variance.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Sample a response from a single model (temperature sampling, or argmax when
// greedy). Stops at EOS (excluded from the result) or max_new_tokens.
std::vector<int> sample_response(const ModelParams& params,
                                 std::span<const int> prompt, int eos_id,
                                 double temperature, int max_new_tokens,
                                 SeededRng& rng, bool greedy = false);

struct EvalResult {
    double overall{0.0};
    std::vector<double> per_bucket;  // mean ROUGE-L F1; 0 for empty buckets
    std::vector<int> bucket_counts;
    std::vector<double> per_item;
};

// Mean ROUGE-L of `seeds` sampled responses per test item (temperature 1.0),
// aggregated overall and by reference-length bucket. `greedy` replaces
// sampling with argmax decoding for diagnostic runs.
EvalResult evaluate_model(const ModelParams& params,
                          const std::vector<Example>& testset,
                          const LengthBucketSpec& buckets, const Vocab& vocab,
                          std::uint64_t master_seed, int seeds = 5,
                          int max_new_tokens = 128, bool greedy = false);

// Spearman(xs, ys) within each length bucket; buckets holding fewer than
// min_count points (or with zero rank variance) are reported absent.
std::vector<std::optional<double>> bucketed_spearman(
    std::span<const int> lengths, std::span<const double> xs,
    std::span<const double> ys, const LengthBucketSpec& buckets,
    int min_count = 30);

struct MisguidancePolicyResult {
    std::vector<std::optional<double>> coefficients;  // per bucket
    std::vector<int> bucket_counts;
    std::vector<int> lengths;      // generated content length per example
    std::vector<double> rouge;     // per example
    std::vector<double> loss;      // per example sequence divergence
};

struct MisguidanceResult {
    MisguidancePolicyResult policy_a;
    MisguidancePolicyResult policy_b;
};

// For each example, generate with each policy (same per-item seeds for both),
// score ROUGE-L against ground truth and the sequence divergence loss, bucket
// by generated length, and correlate the two per bucket.
MisguidanceResult misguidance_analysis(
    const ModelParams& teacher, const ModelParams& student,
    const std::vector<Example>& examples, const PolicySpec& policy_a,
    const PolicySpec& policy_b, const LengthBucketSpec& buckets,
    const DivergenceSpec& divergence, const Vocab& vocab,
    std::uint64_t master_seed);

}  // namespace kdlab
