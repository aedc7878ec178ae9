#include "kdlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kdlab {

RougeScore rouge_l(std::span<const int> candidate, std::span<const int> reference) {
    const std::size_t m = candidate.size();
    const std::size_t n = reference.size();
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = candidate[i - 1] == reference[j - 1]
                         ? prev[j - 1] + 1
                         : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[n]);
    RougeScore score;
    score.precision = m == 0 ? 0.0 : lcs / static_cast<double>(m);
    score.recall = n == 0 ? 0.0 : lcs / static_cast<double>(n);
    const double denom = score.precision + score.recall;
    score.f1 = denom == 0.0 ? 0.0 : 2.0 * score.precision * score.recall / denom;
    return score;
}

void validate_buckets(const LengthBucketSpec& buckets) {
    if (buckets.boundaries.empty()) {
        throw std::invalid_argument("bucket boundaries must be non-empty");
    }
    int prev = 0;
    for (int b : buckets.boundaries) {
        if (b <= prev) {
            throw std::invalid_argument(
                "bucket boundaries must be positive and strictly ascending");
        }
        prev = b;
    }
}

int LengthBucketSpec::bucket_of(int length) const {
    int b = 0;
    for (int boundary : boundaries) {
        if (length <= boundary) return b;
        ++b;
    }
    return b;
}

std::vector<std::string> LengthBucketSpec::labels() const {
    std::vector<std::string> out;
    int lo = 1;
    for (int boundary : boundaries) {
        out.push_back(std::to_string(lo) + "-" + std::to_string(boundary));
        lo = boundary + 1;
    }
    out.push_back(std::to_string(lo) + "+");
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("spearman inputs differ in length");
    }
    if (xs.size() < 2) {
        throw std::invalid_argument("spearman needs at least two points");
    }
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mean = (n + 1.0) / 2.0;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::invalid_argument("spearman undefined for constant input");
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<int> sample_response(const ModelParams& params,
                                 std::span<const int> prompt, int eos_id,
                                 double temperature, int max_new_tokens,
                                 SeededRng& rng, bool greedy) {
    const int ctx = params.config.context_len;
    if (static_cast<int>(prompt.size()) > ctx) {
        throw std::invalid_argument("prompt does not fit the context window");
    }
    auto state = init_decoder(params);
    for (int tok : prompt) decoder_advance(params, state, tok);
    int consumed = static_cast<int>(prompt.size());
    std::vector<int> out;
    for (int t = 0; t < max_new_tokens; ++t) {
        int token;
        if (greedy) {
            const auto logits = decoder_logits(params, state);
            token = static_cast<int>(
                std::max_element(logits.begin(), logits.end()) - logits.begin());
        } else {
            const auto dist = softmax(decoder_logits(params, state), temperature);
            token = sample_categorical(dist, rng);
        }
        if (token == eos_id) return out;
        out.push_back(token);
        if (consumed >= ctx) break;
        decoder_advance(params, state, token);
        ++consumed;
    }
    return out;
}

namespace {

std::span<const int> strip_eos(std::span<const int> tokens, int eos_id) {
    if (!tokens.empty() && tokens.back() == eos_id) {
        return tokens.subspan(0, tokens.size() - 1);
    }
    return tokens;
}

}  // namespace

EvalResult evaluate_model(const ModelParams& params,
                          const std::vector<Example>& testset,
                          const LengthBucketSpec& buckets, const Vocab& vocab,
                          std::uint64_t master_seed, int seeds,
                          int max_new_tokens, bool greedy) {
    validate_buckets(buckets);
    if (testset.empty()) throw std::invalid_argument("test set is empty");
    if (seeds < 1) throw std::invalid_argument("need at least one sampling seed");

    EvalResult result;
    result.per_bucket.assign(static_cast<std::size_t>(buckets.bucket_count()), 0.0);
    result.bucket_counts.assign(static_cast<std::size_t>(buckets.bucket_count()), 0);

    double total = 0.0;
    for (std::size_t i = 0; i < testset.size(); ++i) {
        const auto& example = testset[i];
        const auto prompt = prompt_of(example);
        const std::span<const int> reference =
            strip_eos(example.response, vocab.eos_id);
        double item_score = 0.0;
        for (int s = 0; s < seeds; ++s) {
            auto rng = SeededRng::derive(master_seed, RngRole::kEval, i,
                                         static_cast<std::uint64_t>(s));
            const auto response =
                sample_response(params, prompt, vocab.eos_id, 1.0,
                                max_new_tokens, rng, greedy);
            item_score += rouge_l(response, reference).f1;
        }
        item_score /= seeds;
        result.per_item.push_back(item_score);
        total += item_score;
        const int bucket =
            buckets.bucket_of(content_length(example, vocab.eos_id));
        result.per_bucket[static_cast<std::size_t>(bucket)] += item_score;
        result.bucket_counts[static_cast<std::size_t>(bucket)] += 1;
    }
    result.overall = total / static_cast<double>(testset.size());
    for (std::size_t b = 0; b < result.per_bucket.size(); ++b) {
        if (result.bucket_counts[b] > 0) {
            result.per_bucket[b] /= result.bucket_counts[b];
        }
    }
    return result;
}

std::vector<std::optional<double>> bucketed_spearman(
    std::span<const int> lengths, std::span<const double> xs,
    std::span<const double> ys, const LengthBucketSpec& buckets,
    int min_count) {
    validate_buckets(buckets);
    if (lengths.size() != xs.size() || xs.size() != ys.size()) {
        throw std::invalid_argument("bucketed_spearman inputs differ in length");
    }
    const auto nb = static_cast<std::size_t>(buckets.bucket_count());
    std::vector<std::vector<double>> bx(nb), by(nb);
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        const auto b = static_cast<std::size_t>(buckets.bucket_of(lengths[i]));
        bx[b].push_back(xs[i]);
        by[b].push_back(ys[i]);
    }
    std::vector<std::optional<double>> out(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        if (static_cast<int>(bx[b].size()) < std::max(min_count, 2)) continue;
        try {
            out[b] = spearman(bx[b], by[b]);
        } catch (const std::invalid_argument&) {
            // zero variance: leave absent
        }
    }
    return out;
}

namespace {

MisguidancePolicyResult run_misguidance_policy(
    const ModelParams& teacher, const ModelParams& student,
    const std::vector<Example>& examples, const PolicySpec& policy,
    const LengthBucketSpec& buckets, const DivergenceSpec& divergence,
    const Vocab& vocab, std::uint64_t master_seed) {
    MisguidancePolicyResult result;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& example = examples[i];
        const auto prompt = prompt_of(example);
        const auto sub =
            SeededRng::derive(master_seed, RngRole::kMisguidance, i).next_u64();
        auto rngs = GenRngs::derive(sub);
        const auto trace =
            generate(teacher, student, prompt, policy, rngs, vocab.eos_id);

        const std::span<const int> generated = strip_eos(trace.tokens, vocab.eos_id);
        const std::span<const int> reference =
            strip_eos(example.response, vocab.eos_id);
        result.lengths.push_back(static_cast<int>(generated.size()));
        result.rouge.push_back(rouge_l(generated, reference).f1);

        const auto teacher_dists = forward_seq(teacher, prompt, trace.tokens);
        const auto student_dists = forward_seq(student, prompt, trace.tokens);
        result.loss.push_back(
            sequence_divergence(teacher_dists, student_dists, divergence));
    }
    result.coefficients =
        bucketed_spearman(result.lengths, result.rouge, result.loss, buckets);
    result.bucket_counts.assign(static_cast<std::size_t>(buckets.bucket_count()), 0);
    for (int len : result.lengths) {
        result.bucket_counts[static_cast<std::size_t>(buckets.bucket_of(len))] += 1;
    }
    return result;
}

}  // namespace

MisguidanceResult misguidance_analysis(
    const ModelParams& teacher, const ModelParams& student,
    const std::vector<Example>& examples, const PolicySpec& policy_a,
    const PolicySpec& policy_b, const LengthBucketSpec& buckets,
    const DivergenceSpec& divergence, const Vocab& vocab,
    std::uint64_t master_seed) {
    validate_buckets(buckets);
    if (examples.empty()) throw std::invalid_argument("no examples to analyze");
    if (policy_a.max_new_tokens < 1 || policy_b.max_new_tokens < 1) {
        throw std::invalid_argument("analysis policies must generate tokens");
    }
    MisguidanceResult result;
    result.policy_a =
        run_misguidance_policy(teacher, student, examples, policy_a, buckets,
                               divergence, vocab, master_seed);
    result.policy_b =
        run_misguidance_policy(teacher, student, examples, policy_b, buckets,
                               divergence, vocab, master_seed);
    return result;
}

}  // namespace kdlab
