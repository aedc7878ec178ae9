#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdlab/corpus.hpp"
#include "kdlab/eval.hpp"
#include "kdlab/model.hpp"
#include "kdlab/policy.hpp"
#include "kdlab/trainer.hpp"

// Run configuration: one structured file drives every command. Parsing is
// total: every invalid or unknown field is collected and reported together
// before any work starts.

namespace kdlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorpusConfig {
    std::string dir;  // default <out_dir>/corpus
    int vocab_size{64};
    int context_len{160};
    std::vector<TaskSpec> tasks;  // default default_task_specs()
    SplitFractions fractions;
};

struct EvalConfig {
    int seeds{5};
    int max_new_tokens{128};
    int misguidance_items{800};
};

struct SweepConfig {
    std::string axis{"decay_factor"};
    std::vector<double> lambdas{0.2, 0.1, 1.0 / 15.0, 0.04};
    std::vector<std::string> strategies{"exp_decay", "linear_decrease",
                                        "exp_growth", "constant", "mixin",
                                        "random"};
    std::vector<std::string> divergences{"kl", "rkl", "gjsd", "srkl"};
    int epochs{-1};  // -1: use train.epochs
};

struct RunConfig {
    std::uint64_t seed{0};
    bool seed_set{false};
    std::string out_dir;
    ModelConfig teacher{64, 16, 64, 160, ArchKind::kGru};
    ModelConfig student{64, 16, 16, 160, ArchKind::kGru};
    TrainConfig train;      // train.policy mirrors `policy`
    PolicySpec policy;
    LengthBucketSpec buckets;
    CorpusConfig corpus;
    EvalConfig eval;
    SweepConfig sweep;
    int teacher_epochs{12};
    int init_epochs{3};  // student supervised warmup before distillation
    std::string teacher_ckpt;  // default <out_dir>/teacher.ckpt
    std::string student_ckpt;  // default <out_dir>/student.ckpt

    std::filesystem::path corpus_dir() const;
    std::filesystem::path teacher_ckpt_path() const;
    std::filesystem::path student_ckpt_path() const;
};

// Parse and fully validate a config JSON text. Applies --set style dotted
// overrides before validation. Throws ConfigError listing every problem.
RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides = {});

// Serialized form of the effective config (defaults filled in).
std::string run_config_to_json(const RunConfig& config);

// Default output directory: $KDLAB_OUT_DIR if set, else "out".
std::string default_out_dir();

constexpr const char* kOutDirEnvVar = "KDLAB_OUT_DIR";

}  // namespace kdlab
