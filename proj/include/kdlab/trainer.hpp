#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kdlab/corpus.hpp"
#include "kdlab/divergence.hpp"
#include "kdlab/eval.hpp"
#include "kdlab/model.hpp"
#include "kdlab/policy.hpp"

// Training loops: supervised fine-tuning, token-level distillation on ground
// truth, distillation on teacher / student / switch-generated sequences, with
// the generated-vs-ground-truth mixing rule and an optional auxiliary LM
// term. The teacher is always frozen; sampled sequences are treated as data.

namespace kdlab {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrainMethod { kSft, kKd, kSeqKd, kSgoDistill, kSwitchDistill };

std::string method_name(TrainMethod method);
TrainMethod method_from_name(const std::string& name);

// True for methods whose training sequences come from a generation policy.
bool method_generates(TrainMethod method);
// Generation policy a method actually runs: seqkd samples the teacher,
// sgo_distill the student, switch_distill any two-model interleaving
// (switch by default, mixin/random when configured).
PolicyKind effective_policy_kind(TrainMethod method, PolicyKind configured);
// True for methods whose per-step loss is cross-entropy against the sequence
// tokens rather than a divergence against the teacher distribution.
bool method_uses_cross_entropy(TrainMethod method);

struct TrainConfig {
    TrainMethod method{TrainMethod::kSwitchDistill};
    DivergenceSpec divergence;  // training loss for divergence methods
    PolicySpec policy;          // generation methods; kind is forced by method
    double mix_ratio{0.5};      // P(item trains on a generated sequence)
    double lm_loss_weight{0.0};
    int epochs{10};
    int batch_size{16};
    double learning_rate{1e-3};
    std::uint64_t seed{0};
    int eval_every{0};  // extra validation every N steps; 0 = epoch ends only
};

void validate_train_config(const TrainConfig& config);

struct AdamState {
    std::vector<DenseMatrix> m;
    std::vector<DenseMatrix> v;
    std::int64_t t{0};
};

struct TrainState {
    ModelParams student;
    AdamState opt;
    std::int64_t step{0};
    std::int64_t epochs_done{0};
    std::vector<double> loss_history;
    std::int64_t generated_items{0};
    std::int64_t ground_truth_items{0};
    std::int64_t student_tokens{0};  // provenance of generated tokens
    std::int64_t teacher_tokens{0};
};

struct StepStats {
    double loss{0.0};
    int generated_items{0};
    int ground_truth_items{0};
    int student_tokens{0};
    int teacher_tokens{0};
};

// One batched update: pick each item's training sequence (ground truth vs
// generated per method and mix_ratio), accumulate student-logit gradients of
// the configured loss, apply one Adam step. Throws TrainingError on a
// non-finite loss.
StepStats distill_step(const ModelParams& teacher, TrainState& state,
                       const std::vector<Example>& batch,
                       const TrainConfig& config, const Vocab& vocab,
                       const std::vector<Example>& aux_batch = {});

struct ExperimentReport {
    std::vector<double> loss_per_step;
    std::vector<double> val_rouge_per_epoch;
    double best_val_rouge{0.0};
    int best_epoch{-1};
    double teacher_fraction{0.0};  // among generated tokens, 0 if none
    std::int64_t generated_items{0};
    std::int64_t ground_truth_items{0};
    std::int64_t student_tokens{0};
    std::int64_t teacher_tokens{0};
};

struct DistillResult {
    ModelParams best_student;
    TrainState final_state;
    ExperimentReport report;
};

// Full training run: epochs of shuffled batches over train_set, validation
// after each epoch (greedy decode), best-validation checkpoint returned.
// When csv_path is non-empty, writes per-step rows
// (step, loss, val_rougeL, teacher_fraction). `resume_from` continues a
// previous run's state; remaining epochs derive from state.epochs_done.
DistillResult run_distillation(const ModelParams& teacher,
                               const ModelParams& student_init,
                               const TrainConfig& config,
                               const std::vector<Example>& train_set,
                               const std::vector<Example>& val_set,
                               const Vocab& vocab,
                               const std::filesystem::path& csv_path = {},
                               const TrainState* resume_from = nullptr);

// Supervised fine-tuning from fresh init; returns the best-validation
// checkpoint. Zero epochs returns the initialization unchanged.
ModelParams train_teacher(const ModelConfig& model_config,
                          const TrainConfig& config,
                          const std::vector<Example>& train_set,
                          const std::vector<Example>& val_set,
                          const Vocab& vocab,
                          ExperimentReport* report = nullptr);

// Optimizer-inclusive persistence for resuming: writes student.ckpt and
// optimizer.bin under `dir`.
void save_train_state(const TrainState& state, const std::filesystem::path& dir);
TrainState load_train_state(const std::filesystem::path& dir);

}  // namespace kdlab
