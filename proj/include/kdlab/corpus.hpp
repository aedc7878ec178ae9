#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kdlab/model.hpp"
#include "kdlab/numeric.hpp"

// Synthetic instruction-following corpus. Every task family is a
// deterministic function from prompt to response, so each example has a
// unique correct output and overlap metrics measure real correctness.

namespace kdlab {

struct Example {
    std::vector<int> instruction;
    std::vector<int> input;     // may be empty
    std::vector<int> response;  // non-empty, ends with EOS
    bool operator==(const Example&) const = default;
};

// instruction followed by input: what the model conditions on.
std::vector<int> prompt_of(const Example& example);
// Response length excluding the trailing EOS.
int content_length(const Example& example, int eos_id);

enum class TaskFamily { kCopy, kReverse, kSort, kRepeatK, kArithSeq };

std::string family_name(TaskFamily family);
TaskFamily family_from_name(const std::string& name);

struct TaskSpec {
    TaskFamily family{TaskFamily::kCopy};
    int min_len{1};   // response content tokens
    int max_len{10};
    int count{0};
};

// Mix of families sized 2300 and spread so each response-length bucket
// (1-10, 11-50, 51+) holds at least 20% of the corpus.
std::vector<TaskSpec> default_task_specs();

std::vector<Example> generate_corpus(const std::vector<TaskSpec>& specs,
                                     const Vocab& vocab, SeededRng& rng,
                                     int context_len = 160);

// Recompute the unique correct response (including EOS) from a prompt.
std::vector<int> expected_response(const Vocab& vocab,
                                   std::span<const int> instruction,
                                   std::span<const int> input);

struct SplitFractions {
    double train{2000.0 / 2300.0};
    double validation{150.0 / 2300.0};
    double test{150.0 / 2300.0};
};

struct CorpusSplit {
    std::vector<Example> train;
    std::vector<Example> validation;
    std::vector<Example> test;
};

// Disjoint, exhaustive, seed-deterministic split, stratified by response
// length bucket.
CorpusSplit split(const std::vector<Example>& corpus,
                  const SplitFractions& fractions, SeededRng& rng, int eos_id);

// Line-delimited dataset file: a version header line, then one record per
// line with instruction/input/response as whitespace-separated token strings.
void save_jsonl(const std::vector<Example>& examples, const Vocab& vocab,
                const std::filesystem::path& path);
std::vector<Example> load_jsonl(const std::filesystem::path& path,
                                const Vocab& vocab);

}  // namespace kdlab
