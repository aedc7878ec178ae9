#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "kdlab/corpus.hpp"

using namespace kdlab;

namespace {

const Vocab& vocab() {
    static const Vocab v = Vocab::default_vocab(64);
    return v;
}

int tid(const std::string& token) { return vocab().id_of(token); }

std::vector<int> ids_of(std::initializer_list<const char*> tokens) {
    std::vector<int> out;
    for (const char* t : tokens) out.push_back(tid(t));
    return out;
}

std::vector<int> with_eos(std::vector<int> ids) {
    ids.push_back(vocab().eos_id);
    return ids;
}

int bucket3(int length) { return length <= 10 ? 0 : length <= 50 ? 1 : 2; }

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_lines(const std::filesystem::path& path,
                 const std::vector<std::string>& lines) {
    std::ofstream f(path, std::ios::trunc);
    for (const auto& line : lines) f << line << "\n";
}

const std::string kHeader = R"({"format":"kdlab-corpus","version":1})";

std::string example_key(const Example& e) {
    std::string key;
    for (int t : e.instruction) key += std::to_string(t) + " ";
    key += "|";
    for (int t : e.input) key += std::to_string(t) + " ";
    key += "|";
    for (int t : e.response) key += std::to_string(t) + " ";
    return key;
}

}  // namespace

TEST_CASE("task responses follow their definitions") {
    const auto& v = vocab();

    CHECK(expected_response(v, ids_of({"copy"}), ids_of({"a", "b"})) ==
          with_eos(ids_of({"a", "b"})));
    CHECK(expected_response(v, ids_of({"reverse"}), ids_of({"a", "b", "c"})) ==
          with_eos(ids_of({"c", "b", "a"})));
    CHECK(expected_response(v, ids_of({"sort"}), ids_of({"c", "a", "h", "b"})) ==
          with_eos(ids_of({"a", "b", "c", "h"})));
    CHECK(expected_response(v, ids_of({"sort"}), ids_of({"d", "d", "a"})) ==
          with_eos(ids_of({"a", "d", "d"})));

    const auto repeated =
        expected_response(v, ids_of({"repeat", "3", "0"}), ids_of({"a", "b"}));
    REQUIRE(repeated.size() == 61);
    CHECK(repeated.back() == v.eos_id);
    for (int i = 0; i < 30; ++i) {
        CHECK(repeated[2 * i] == tid("a"));
        CHECK(repeated[2 * i + 1] == tid("b"));
    }
    CHECK(bucket3(content_length({{}, {}, repeated}, v.eos_id)) == 2);

    CHECK(expected_response(v, ids_of({"arith"}), ids_of({"7", "3", "0", "5"})) ==
          with_eos(ids_of({"7", "0", "3", "6", "9"})));
    CHECK(expected_response(v, ids_of({"arith"}), ids_of({"4", "0", "0", "3"})) ==
          with_eos(ids_of({"4", "4", "4"})));
}

TEST_CASE("expected_response rejects malformed prompts") {
    const auto& v = vocab();
    CHECK_THROWS_AS(expected_response(v, {}, ids_of({"a"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"a"}), ids_of({"b"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"copy", "a"}), ids_of({"b"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"repeat", "0", "0"}),
                                      ids_of({"a"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"repeat", "a", "b"}),
                                      ids_of({"a"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"arith"}), ids_of({"1", "2"})),
                    std::invalid_argument);
    CHECK_THROWS_AS(expected_response(v, ids_of({"arith"}),
                                      ids_of({"1", "2", "0", "0"})),
                    std::invalid_argument);
}

TEST_CASE("prompt_of and content_length") {
    Example e;
    e.instruction = ids_of({"copy"});
    e.input = ids_of({"a", "b"});
    e.response = with_eos(ids_of({"a", "b"}));
    CHECK(prompt_of(e) == ids_of({"copy", "a", "b"}));
    CHECK(content_length(e, vocab().eos_id) == 2);
    e.response = ids_of({"a", "b"});
    CHECK(content_length(e, vocab().eos_id) == 2);
    e.response.clear();
    CHECK(content_length(e, vocab().eos_id) == 0);
}

TEST_CASE("default corpus is self-consistent and covers all buckets") {
    const auto& v = vocab();
    const auto specs = default_task_specs();
    int total = 0;
    for (const auto& s : specs) total += s.count;
    CHECK(total == 2300);

    auto rng = SeededRng::derive(99, RngRole::kCorpusGen);
    const auto corpus = generate_corpus(specs, v, rng);
    REQUIRE(corpus.size() == 2300);

    std::array<int, 3> bucket_counts = {0, 0, 0};
    std::size_t pos = 0;
    for (const auto& spec : specs) {
        for (int i = 0; i < spec.count; ++i, ++pos) {
            const auto& e = corpus[pos];
            CHECK(e.response == expected_response(v, e.instruction, e.input));
            CHECK(e.response.back() == v.eos_id);
            const int len = content_length(e, v.eos_id);
            CHECK(len >= spec.min_len);
            CHECK(len <= spec.max_len);
            ++bucket_counts[static_cast<std::size_t>(bucket3(len))];
        }
    }
    for (int count : bucket_counts) {
        CHECK(count >= static_cast<int>(0.2 * 2300));
    }
}

TEST_CASE("sort inputs stay inside the smaller alphabet") {
    const auto& v = vocab();
    std::vector<TaskSpec> specs = {{TaskFamily::kSort, 5, 20, 60},
                                   {TaskFamily::kCopy, 5, 20, 60}};
    auto rng = SeededRng::derive(4, RngRole::kCorpusGen);
    const auto corpus = generate_corpus(specs, v, rng);
    const int a = tid("a");
    for (int i = 0; i < 60; ++i) {
        for (int t : corpus[static_cast<std::size_t>(i)].input) {
            CHECK(t >= a);
            CHECK(t < a + 8);
        }
    }
    for (int i = 60; i < 120; ++i) {
        for (int t : corpus[static_cast<std::size_t>(i)].input) {
            CHECK(t >= a);
            CHECK(t < a + 12);
        }
    }
}

TEST_CASE("corpus generation is deterministic in the seed") {
    const auto& v = vocab();
    const auto specs = default_task_specs();
    auto r1 = SeededRng::derive(7, RngRole::kCorpusGen);
    auto r2 = SeededRng::derive(7, RngRole::kCorpusGen);
    auto r3 = SeededRng::derive(8, RngRole::kCorpusGen);
    const auto a = generate_corpus(specs, v, r1);
    const auto b = generate_corpus(specs, v, r2);
    const auto c = generate_corpus(specs, v, r3);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("generation rejects infeasible specs") {
    const auto& v = vocab();
    auto rng = SeededRng::derive(1, RngRole::kCorpusGen);

    CHECK_THROWS_AS(generate_corpus({{TaskFamily::kCopy, 1, 10, 5}}, v, rng, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_corpus({{TaskFamily::kCopy, 0, 10, 5}}, v, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_corpus({{TaskFamily::kCopy, 5, 4, 5}}, v, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_corpus({{TaskFamily::kCopy, 1, 10, -1}}, v, rng),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        generate_corpus({{TaskFamily::kRepeatK, 101, 101, 1}}, v, rng, 500),
        "repeat_k cannot encode a response of length 101",
        std::invalid_argument);
    CHECK_THROWS_AS(generate_corpus({{TaskFamily::kArithSeq, 100, 100, 1}}, v,
                                    rng, 500),
                    std::invalid_argument);
    try {
        generate_corpus({{TaskFamily::kCopy, 1, 200, 5}}, v, rng, 160);
        FAIL("expected a context-length error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("over the context length") !=
              std::string::npos);
    }
}

TEST_CASE("split partitions the corpus with stratified, exact sizes") {
    const auto& v = vocab();
    const auto specs = default_task_specs();
    auto gen_rng = SeededRng::derive(11, RngRole::kCorpusGen);
    const auto corpus = generate_corpus(specs, v, gen_rng);

    auto rng = SeededRng::derive(11, RngRole::kSplit);
    const auto parts = split(corpus, SplitFractions{}, rng, v.eos_id);
    CHECK(parts.train.size() == 2000);
    CHECK(parts.validation.size() == 150);
    CHECK(parts.test.size() == 150);

    std::multiset<std::string> original;
    for (const auto& e : corpus) original.insert(example_key(e));
    std::multiset<std::string> recombined;
    for (const auto* part : {&parts.train, &parts.validation, &parts.test}) {
        for (const auto& e : *part) recombined.insert(example_key(e));
    }
    CHECK(original == recombined);

    std::array<int, 3> corpus_buckets = {0, 0, 0};
    for (const auto& e : corpus) {
        ++corpus_buckets[static_cast<std::size_t>(
            bucket3(content_length(e, v.eos_id)))];
    }
    std::array<int, 3> train_buckets = {0, 0, 0};
    for (const auto& e : parts.train) {
        ++train_buckets[static_cast<std::size_t>(
            bucket3(content_length(e, v.eos_id)))];
    }
    for (std::size_t b = 0; b < 3; ++b) {
        const double corpus_frac =
            static_cast<double>(corpus_buckets[b]) / corpus.size();
        const double train_frac =
            static_cast<double>(train_buckets[b]) / parts.train.size();
        CHECK(std::abs(corpus_frac - train_frac) < 0.05);
    }
}

TEST_CASE("split on a round corpus gives round sizes") {
    const auto& v = vocab();
    const auto specs = default_task_specs();
    auto gen_rng = SeededRng::derive(12, RngRole::kCorpusGen);
    auto corpus = generate_corpus(specs, v, gen_rng);
    corpus.resize(1000);

    auto rng = SeededRng::derive(12, RngRole::kSplit);
    const auto parts = split(corpus, {0.9, 0.05, 0.05}, rng, v.eos_id);
    CHECK(parts.train.size() == 900);
    CHECK(parts.validation.size() == 50);
    CHECK(parts.test.size() == 50);
}

TEST_CASE("split is seed-deterministic and shuffles across seeds") {
    const auto& v = vocab();
    auto gen_rng = SeededRng::derive(13, RngRole::kCorpusGen);
    const auto corpus = generate_corpus(default_task_specs(), v, gen_rng);

    auto r1 = SeededRng::derive(5, RngRole::kSplit);
    auto r2 = SeededRng::derive(5, RngRole::kSplit);
    auto r3 = SeededRng::derive(6, RngRole::kSplit);
    const auto a = split(corpus, SplitFractions{}, r1, v.eos_id);
    const auto b = split(corpus, SplitFractions{}, r2, v.eos_id);
    const auto c = split(corpus, SplitFractions{}, r3, v.eos_id);
    CHECK(a.train == b.train);
    CHECK(a.validation == b.validation);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
}

TEST_CASE("split rejects tiny corpora and bad fractions") {
    const auto& v = vocab();
    auto gen_rng = SeededRng::derive(14, RngRole::kCorpusGen);
    auto corpus = generate_corpus(default_task_specs(), v, gen_rng);

    auto rng = SeededRng::derive(1, RngRole::kSplit);
    std::vector<Example> tiny(corpus.begin(), corpus.begin() + 19);
    CHECK_THROWS_AS(split(tiny, SplitFractions{}, rng, v.eos_id),
                    std::invalid_argument);
    CHECK_THROWS_AS(split(corpus, {0.5, 0.4, 0.2}, rng, v.eos_id),
                    std::invalid_argument);
    CHECK_THROWS_AS(split(corpus, {-0.2, 0.6, 0.6}, rng, v.eos_id),
                    std::invalid_argument);
}

TEST_CASE("dataset files round-trip and start with a header") {
    const auto& v = vocab();
    auto gen_rng = SeededRng::derive(15, RngRole::kCorpusGen);
    auto corpus = generate_corpus(default_task_specs(), v, gen_rng);
    corpus.resize(80);

    const auto path = temp_file("kdlab_corpus_roundtrip.jsonl");
    save_jsonl(corpus, v, path);
    std::ifstream f(path);
    std::string first;
    std::getline(f, first);
    const auto header = nlohmann::json::parse(first);
    CHECK(header.at("format") == "kdlab-corpus");
    CHECK(header.at("version") == 1);
    f.close();

    const auto loaded = load_jsonl(path, v);
    CHECK(loaded == corpus);
    std::filesystem::remove(path);
}

TEST_CASE("dataset loading reports the offending line") {
    const auto& v = vocab();
    const auto path = temp_file("kdlab_corpus_bad.jsonl");
    const std::string good =
        R"({"instruction":"copy","input":"a b","response":"a b <eos>"})";

    auto load_error = [&](const std::vector<std::string>& lines) {
        write_lines(path, lines);
        try {
            load_jsonl(path, v);
            return std::string("no error");
        } catch (const std::exception& e) {
            return std::string(e.what());
        }
    };

    CHECK(load_error({kHeader, "{not json"}) == "line 2: malformed record");
    CHECK(load_error({R"({"format":"kdlab-corpus","version":9})", good}) ==
          "line 1: unsupported dataset version");
    CHECK(load_error({R"({"format":"other","version":1})", good}) ==
          "line 1: missing dataset header");
    CHECK(load_error({good}) == "line 1: missing dataset header");
    CHECK(load_error({kHeader, good,
                      R"({"instruction":"copy","input":"a","response":"a <eos>","note":"x"})"}) ==
          "line 3: unexpected field \"note\"");
    CHECK(load_error({kHeader, R"({"instruction":"copy","input":"a"})"}) ==
          "line 2: missing \"response\" field");
    CHECK(load_error({kHeader,
                      R"({"instruction":"copy","input":"a","response":"a b"})"})
              .find("response does not end with") != std::string::npos);
    CHECK(load_error({kHeader,
                      R"({"instruction":"copy","input":"a","response":""})"}) ==
          "line 2: response is empty");
    CHECK(load_error({kHeader,
                      R"({"instruction":"copy","input":"zebra99","response":"a <eos>"})"}) ==
          "line 2: unknown token \"zebra99\"");
    CHECK(load_error({kHeader,
                      R"({"instruction":"copy","input":7,"response":"a <eos>"})"}) ==
          "line 2: field \"input\" must be a string");

    write_lines(path, {kHeader, "", good});
    CHECK(load_jsonl(path, v).size() == 1);

    write_lines(path, {});
    CHECK(load_jsonl(path, v).empty());

    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_jsonl(path, v), FormatError);
}

TEST_CASE("family names round-trip") {
    for (auto fam : {TaskFamily::kCopy, TaskFamily::kReverse, TaskFamily::kSort,
                     TaskFamily::kRepeatK, TaskFamily::kArithSeq}) {
        CHECK(family_from_name(family_name(fam)) == fam);
    }
    CHECK_THROWS_AS(family_from_name("translate"), std::invalid_argument);
}
