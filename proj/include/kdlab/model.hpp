#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kdlab/numeric.hpp"

// Compact autoregressive language models. Two architectures behind one
// interface: a single-layer GRU recurrence (default) and a single causal
// attention block. Gradients are hand-derived reverse-mode; checkpoints are
// a versioned little-endian binary format.

namespace kdlab {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VocabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Token inventory with reserved control symbols. Bijective token <-> id map.
struct Vocab {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> ids;
    int pad_id{0};
    int bos_id{1};
    int eos_id{2};

    // Control symbols, task keywords, digits 0-9, letters a-z, then filler
    // symbols up to `size` (44 <= size <= 256).
    static Vocab default_vocab(int size = 64);

    int size() const { return static_cast<int>(tokens.size()); }
    int id_of(const std::string& token) const;  // throws VocabError
    const std::string& token_of(int id) const;  // throws VocabError

    // First ids of the letter and digit ranges in the default vocab.
    static constexpr int kNumTaskWords = 5;
    static constexpr int kNumDigits = 10;
    static constexpr int kNumLetters = 26;
};

enum class ArchKind { kGru, kAttn1 };

std::string arch_name(ArchKind arch);
ArchKind arch_from_name(const std::string& name);

struct ModelConfig {
    int vocab_size{64};
    int embed_dim{16};
    int hidden_dim{16};
    int context_len{160};
    ArchKind arch{ArchKind::kGru};
};

void validate_model_config(const ModelConfig& config);

// Parameter block indices, fixed per architecture. Blocks are stored in this
// order everywhere: in memory, in gradients, in optimizer state, on disk.
namespace gru_block {
enum : std::size_t {
    kEmbedding, kWz, kWr, kWh, kUz, kUr, kUh, kBz, kBr, kBh,
    kOutProj, kOutBias, kCount
};
}
namespace attn_block {
enum : std::size_t {
    kEmbedding, kPos, kWq, kWk, kWv, kW1, kB1, kOutProj, kOutBias, kCount
};
}

std::vector<std::pair<std::size_t, std::size_t>> block_shapes(
    const ModelConfig& config);
std::vector<std::string> block_names(ArchKind arch);

struct ModelParams {
    ModelConfig config;
    std::vector<DenseMatrix> blocks;

    // Weights uniform in (-0.08, 0.08), biases zero.
    static ModelParams init(const ModelConfig& config, SeededRng& rng);

    std::size_t parameter_count() const;
    std::vector<double> to_flat() const;
    void from_flat(std::span<const double> flat);
};

// Incremental decoding state: one advance() per consumed token, so generation
// never re-runs full prefixes.
struct DecoderState {
    int consumed{0};
    std::vector<double> h;  // GRU hidden
    // attn1 caches, one entry per consumed position.
    std::vector<std::vector<double>> xs, ks, vs;
};

DecoderState init_decoder(const ModelParams& params);
// Consume one token. Throws on context overflow or out-of-range token id.
void decoder_advance(const ModelParams& params, DecoderState& state, int token);
LogitsVector decoder_logits(const ModelParams& params, const DecoderState& state);

// Next-token distribution after consuming `context`.
ProbVector forward_dist(const ModelParams& params, std::span<const int> context);

// Distributions at every response position; element t is conditioned on
// prompt + response[0..t-1].
std::vector<ProbVector> forward_seq(const ModelParams& params,
                                    std::span<const int> prompt,
                                    std::span<const int> response);
std::vector<LogitsVector> forward_seq_logits(const ModelParams& params,
                                             std::span<const int> prompt,
                                             std::span<const int> response);

// Reverse-mode gradients of sum_t <logit_grads[t], logits_t> with respect to
// every parameter block. Shapes match params.blocks.
std::vector<DenseMatrix> backward(
    const ModelParams& params, std::span<const int> prompt,
    std::span<const int> response,
    const std::vector<std::vector<double>>& logit_grads);

// Versioned binary checkpoint; load(save(p)) is bit-exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace kdlab
