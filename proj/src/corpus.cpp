#include "kdlab/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace kdlab {

namespace {

constexpr int kCopyAlphabet = 12;  // letters drawn from a..l
constexpr int kSortAlphabet = 8;   // letters drawn from a..h
constexpr int kMaxPatternLen = 3;
constexpr int kMaxEncodedCount = 99;  // two digit tokens

struct VocabIds {
    int digit0;
    int letter_a;
    int task[Vocab::kNumTaskWords];

    explicit VocabIds(const Vocab& vocab)
        : digit0(vocab.id_of("0")), letter_a(vocab.id_of("a")) {
        task[0] = vocab.id_of("copy");
        task[1] = vocab.id_of("reverse");
        task[2] = vocab.id_of("sort");
        task[3] = vocab.id_of("repeat");
        task[4] = vocab.id_of("arith");
    }

    int digit(int d) const { return digit0 + d; }
    int letter(int l) const { return letter_a + l; }

    int decode_digit(int id) const {
        const int d = id - digit0;
        if (d < 0 || d >= Vocab::kNumDigits) {
            throw std::invalid_argument("expected a digit token");
        }
        return d;
    }
};

int prompt_len_for(TaskFamily family, int content_len, int pattern_len) {
    switch (family) {
        case TaskFamily::kCopy:
        case TaskFamily::kReverse:
        case TaskFamily::kSort:
            return 1 + content_len;
        case TaskFamily::kRepeatK:
            return 3 + pattern_len;
        case TaskFamily::kArithSeq:
            return 1 + 4;
    }
    throw std::invalid_argument("bad task family");
}

std::vector<int> feasible_patterns(int content_len) {
    std::vector<int> ms;
    for (int m = 1; m <= kMaxPatternLen; ++m) {
        if (content_len % m == 0 && content_len / m <= kMaxEncodedCount) {
            ms.push_back(m);
        }
    }
    return ms;
}

void check_spec(const TaskSpec& spec, int context_len) {
    if (spec.count < 0) throw std::invalid_argument("task count must be >= 0");
    if (spec.min_len < 1 || spec.max_len < spec.min_len) {
        throw std::invalid_argument("task length range must satisfy 1 <= min <= max");
    }
    for (int len = spec.min_len; len <= spec.max_len; ++len) {
        int pattern_len = 0;
        if (spec.family == TaskFamily::kRepeatK) {
            const auto ms = feasible_patterns(len);
            if (ms.empty()) {
                throw std::invalid_argument(
                    "repeat_k cannot encode a response of length " +
                    std::to_string(len));
            }
            pattern_len = ms.back();
        }
        if (spec.family == TaskFamily::kArithSeq && len > kMaxEncodedCount) {
            throw std::invalid_argument("arith_seq length cap is " +
                                        std::to_string(kMaxEncodedCount));
        }
        const int total = prompt_len_for(spec.family, len, pattern_len) + len + 1;
        if (total > context_len) {
            throw std::invalid_argument(
                family_name(spec.family) + " example of response length " +
                std::to_string(len) + " needs " + std::to_string(total) +
                " tokens, over the context length " + std::to_string(context_len));
        }
    }
}

std::vector<int> two_digit(const VocabIds& ids, int value) {
    return {ids.digit(value / 10), ids.digit(value % 10)};
}

Example make_example(TaskFamily family, int content_len, const VocabIds& ids,
                     const Vocab& vocab, SeededRng& rng) {
    Example e;
    switch (family) {
        case TaskFamily::kCopy:
        case TaskFamily::kReverse: {
            e.instruction = {family == TaskFamily::kCopy ? ids.task[0] : ids.task[1]};
            for (int i = 0; i < content_len; ++i) {
                e.input.push_back(
                    ids.letter(static_cast<int>(rng.next_below(kCopyAlphabet))));
            }
            break;
        }
        case TaskFamily::kSort: {
            e.instruction = {ids.task[2]};
            for (int i = 0; i < content_len; ++i) {
                e.input.push_back(
                    ids.letter(static_cast<int>(rng.next_below(kSortAlphabet))));
            }
            break;
        }
        case TaskFamily::kRepeatK: {
            const auto ms = feasible_patterns(content_len);
            const int m = ms[rng.next_below(ms.size())];
            const int k = content_len / m;
            e.instruction = {ids.task[3]};
            const auto digits = two_digit(ids, k);
            e.instruction.insert(e.instruction.end(), digits.begin(), digits.end());
            for (int i = 0; i < m; ++i) {
                e.input.push_back(
                    ids.letter(static_cast<int>(rng.next_below(kCopyAlphabet))));
            }
            break;
        }
        case TaskFamily::kArithSeq: {
            e.instruction = {ids.task[4]};
            e.input = {ids.digit(static_cast<int>(rng.next_below(10))),
                       ids.digit(static_cast<int>(rng.next_below(10)))};
            const auto digits = two_digit(ids, content_len);
            e.input.insert(e.input.end(), digits.begin(), digits.end());
            break;
        }
    }
    e.response = expected_response(vocab, e.instruction, e.input);
    return e;
}

}  // namespace

std::vector<int> prompt_of(const Example& example) {
    std::vector<int> prompt = example.instruction;
    prompt.insert(prompt.end(), example.input.begin(), example.input.end());
    return prompt;
}

int content_length(const Example& example, int eos_id) {
    auto n = static_cast<int>(example.response.size());
    if (n > 0 && example.response.back() == eos_id) --n;
    return n;
}

std::string family_name(TaskFamily family) {
    switch (family) {
        case TaskFamily::kCopy: return "copy";
        case TaskFamily::kReverse: return "reverse";
        case TaskFamily::kSort: return "sort";
        case TaskFamily::kRepeatK: return "repeat_k";
        case TaskFamily::kArithSeq: return "arith_seq";
    }
    throw std::invalid_argument("bad task family");
}

TaskFamily family_from_name(const std::string& name) {
    if (name == "copy") return TaskFamily::kCopy;
    if (name == "reverse") return TaskFamily::kReverse;
    if (name == "sort") return TaskFamily::kSort;
    if (name == "repeat_k") return TaskFamily::kRepeatK;
    if (name == "arith_seq") return TaskFamily::kArithSeq;
    throw std::invalid_argument("unknown task family: \"" + name + "\"");
}

std::vector<TaskSpec> default_task_specs() {
    return {
        {TaskFamily::kCopy, 1, 10, 250},
        {TaskFamily::kReverse, 2, 10, 150},
        {TaskFamily::kSort, 2, 10, 150},
        {TaskFamily::kRepeatK, 2, 10, 50},
        {TaskFamily::kArithSeq, 1, 10, 100},
        {TaskFamily::kSort, 11, 50, 300},
        {TaskFamily::kRepeatK, 11, 50, 300},
        {TaskFamily::kArithSeq, 11, 50, 300},
        {TaskFamily::kRepeatK, 51, 90, 400},
        {TaskFamily::kArithSeq, 51, 99, 300},
    };
}

std::vector<Example> generate_corpus(const std::vector<TaskSpec>& specs,
                                     const Vocab& vocab, SeededRng& rng,
                                     int context_len) {
    if (context_len < 4) throw std::invalid_argument("context length too small");
    const VocabIds ids(vocab);
    for (const auto& spec : specs) check_spec(spec, context_len);
    std::vector<Example> corpus;
    for (const auto& spec : specs) {
        for (int i = 0; i < spec.count; ++i) {
            const int span = spec.max_len - spec.min_len + 1;
            const int len =
                spec.min_len + static_cast<int>(rng.next_below(
                                   static_cast<std::uint64_t>(span)));
            corpus.push_back(make_example(spec.family, len, ids, vocab, rng));
        }
    }
    return corpus;
}

std::vector<int> expected_response(const Vocab& vocab,
                                   std::span<const int> instruction,
                                   std::span<const int> input) {
    const VocabIds ids(vocab);
    if (instruction.empty()) {
        throw std::invalid_argument("instruction is empty");
    }
    std::vector<int> out;
    const int head = instruction[0];
    if (head == ids.task[0] || head == ids.task[1]) {  // copy / reverse
        if (instruction.size() != 1) {
            throw std::invalid_argument("copy/reverse instruction takes no arguments");
        }
        out.assign(input.begin(), input.end());
        if (head == ids.task[1]) std::reverse(out.begin(), out.end());
    } else if (head == ids.task[2]) {  // sort
        if (instruction.size() != 1) {
            throw std::invalid_argument("sort instruction takes no arguments");
        }
        out.assign(input.begin(), input.end());
        std::sort(out.begin(), out.end());
    } else if (head == ids.task[3]) {  // repeat_k
        if (instruction.size() != 3) {
            throw std::invalid_argument("repeat instruction needs a two-digit count");
        }
        const int k =
            ids.decode_digit(instruction[1]) * 10 + ids.decode_digit(instruction[2]);
        if (k < 1) throw std::invalid_argument("repeat count must be >= 1");
        for (int rep = 0; rep < k; ++rep) {
            out.insert(out.end(), input.begin(), input.end());
        }
    } else if (head == ids.task[4]) {  // arith_seq
        if (instruction.size() != 1 || input.size() != 4) {
            throw std::invalid_argument(
                "arith instruction takes start, stride and a two-digit length");
        }
        const int start = ids.decode_digit(input[0]);
        const int stride = ids.decode_digit(input[1]);
        const int len = ids.decode_digit(input[2]) * 10 + ids.decode_digit(input[3]);
        if (len < 1) throw std::invalid_argument("arith length must be >= 1");
        for (int i = 0; i < len; ++i) {
            out.push_back(ids.digit((start + i * stride) % 10));
        }
    } else {
        throw std::invalid_argument("instruction does not encode a known task");
    }
    out.push_back(vocab.eos_id);
    return out;
}

namespace {

int bucket_index(int length) {
    if (length <= 10) return 0;
    if (length <= 50) return 1;
    return 2;
}

// Integer apportionment of `total` across `fractions` (largest remainder).
std::vector<int> apportion(int total, const std::vector<double>& fractions) {
    std::vector<int> counts(fractions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = total * fractions[i];
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < total - assigned; ++i) {
        counts[remainders[static_cast<std::size_t>(i) % remainders.size()].second]++;
    }
    return counts;
}

}  // namespace

CorpusSplit split(const std::vector<Example>& corpus,
                  const SplitFractions& fractions, SeededRng& rng, int eos_id) {
    if (corpus.size() < 20) {
        throw std::invalid_argument("split needs at least 20 examples");
    }
    const std::vector<double> f = {fractions.train, fractions.validation,
                                   fractions.test};
    for (double x : f) {
        if (!(x >= 0.0 && x <= 1.0)) {
            throw std::invalid_argument("split fractions must lie in [0, 1]");
        }
    }
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }

    std::vector<std::vector<std::size_t>> buckets(3);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        buckets[static_cast<std::size_t>(
                    bucket_index(content_length(corpus[i], eos_id)))]
            .push_back(i);
    }
    for (auto& bucket : buckets) {
        for (std::size_t i = bucket.size(); i > 1; --i) {
            std::swap(bucket[i - 1], bucket[rng.next_below(i)]);
        }
    }

    const auto global = apportion(static_cast<int>(corpus.size()), f);
    std::vector<std::array<int, 3>> quota(3);
    std::array<int, 3> column_sum = {0, 0, 0};
    for (std::size_t b = 0; b < 3; ++b) {
        const auto counts = apportion(static_cast<int>(buckets[b].size()), f);
        for (std::size_t s = 0; s < 3; ++s) {
            quota[b][s] = counts[s];
            column_sum[s] += counts[s];
        }
    }
    // Per-bucket rounding can leave the split totals off by a few items;
    // shift single items between splits, largest bucket first.
    for (std::size_t s = 0; s < 3; ++s) {
        while (column_sum[s] > global[s]) {
            for (std::size_t d = 0; d < 3; ++d) {
                if (column_sum[d] >= global[d]) continue;
                std::size_t best = 0;
                for (std::size_t b = 1; b < 3; ++b) {
                    if (quota[b][s] > quota[best][s]) best = b;
                }
                --quota[best][s];
                ++quota[best][d];
                --column_sum[s];
                ++column_sum[d];
                break;
            }
        }
    }

    CorpusSplit out;
    for (std::size_t b = 0; b < 3; ++b) {
        std::size_t pos = 0;
        for (int i = 0; i < quota[b][0]; ++i) out.train.push_back(corpus[buckets[b][pos++]]);
        for (int i = 0; i < quota[b][1]; ++i) out.validation.push_back(corpus[buckets[b][pos++]]);
        for (int i = 0; i < quota[b][2]; ++i) out.test.push_back(corpus[buckets[b][pos++]]);
    }
    return out;
}

// --- line-delimited dataset files ---

namespace {

constexpr const char* kCorpusFormat = "kdlab-corpus";
constexpr int kCorpusVersion = 1;

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab.token_of(ids[i]);
    }
    return out;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          std::size_t line_no) {
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        if (pos >= text.size()) break;
        std::size_t end = text.find(' ', pos);
        if (end == std::string::npos) end = text.size();
        const std::string token = text.substr(pos, end - pos);
        try {
            ids.push_back(vocab.id_of(token));
        } catch (const VocabError&) {
            throw VocabError("line " + std::to_string(line_no) +
                             ": unknown token \"" + token + "\"");
        }
        pos = end;
    }
    return ids;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
    throw FormatError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void save_jsonl(const std::vector<Example>& examples, const Vocab& vocab,
                const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("cannot open dataset for writing: " + path.string());
    nlohmann::json header;
    header["format"] = kCorpusFormat;
    header["version"] = kCorpusVersion;
    f << header.dump() << "\n";
    for (const auto& e : examples) {
        nlohmann::json j;
        j["instruction"] = detokenize(e.instruction, vocab);
        j["input"] = detokenize(e.input, vocab);
        j["response"] = detokenize(e.response, vocab);
        f << j.dump() << "\n";
    }
    if (!f) throw FormatError("failed writing dataset: " + path.string());
}

std::vector<Example> load_jsonl(const std::filesystem::path& path,
                                const Vocab& vocab) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open dataset: " + path.string());
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            parse_fail(line_no, "malformed record");
        }
        if (!saw_header) {
            if (!j.contains("format") || !j["format"].is_string() ||
                j["format"].get<std::string>() != kCorpusFormat) {
                parse_fail(line_no, "missing dataset header");
            }
            if (!j.contains("version") || !j["version"].is_number_integer() ||
                j["version"].get<int>() != kCorpusVersion) {
                parse_fail(line_no, "unsupported dataset version");
            }
            saw_header = true;
            continue;
        }
        Example e;
        for (const auto& [key, value] : j.items()) {
            if (key != "instruction" && key != "input" && key != "response") {
                parse_fail(line_no, "unexpected field \"" + key + "\"");
            }
            if (!value.is_string()) {
                parse_fail(line_no, "field \"" + key + "\" must be a string");
            }
        }
        for (const char* key : {"instruction", "input", "response"}) {
            if (!j.contains(key)) {
                parse_fail(line_no, std::string("missing \"") + key + "\" field");
            }
        }
        e.instruction = tokenize(j["instruction"].get<std::string>(), vocab, line_no);
        e.input = tokenize(j["input"].get<std::string>(), vocab, line_no);
        e.response = tokenize(j["response"].get<std::string>(), vocab, line_no);
        if (e.response.empty()) parse_fail(line_no, "response is empty");
        if (e.response.back() != vocab.eos_id) {
            parse_fail(line_no, "response does not end with " +
                                    vocab.token_of(vocab.eos_id));
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace kdlab
