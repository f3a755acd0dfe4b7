#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "medbridge/common.hpp"
#include "medbridge/dataset.hpp"
#include "medbridge/text.hpp"

using namespace medbridge;

namespace {

const std::string kFixtures = FIXTURES_DIR;

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = "/tmp/medbridge_ds_" + name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

DatasetManifest synthetic(const std::array<int, 4>& counts) {
    DatasetManifest m;
    int serial = 0;
    for (std::size_t cls = 0; cls < 4; ++cls) {
        for (int i = 0; i < counts[cls]; ++i) {
            SVOSentence s;
            s.id = "s" + std::to_string(serial++);
            s.text_en = "subject verbs object";
            s.subject = "subj";
            s.verb = "verbs";
            s.object = "obj";
            s.system = kSvoClasses[cls].system;
            s.label = kSvoClasses[cls].label;
            m.sentences.push_back(std::move(s));
        }
    }
    return m;
}

}  // namespace

TEST_CASE("the 40-sentence fixture validates with declared counts") {
    const DatasetManifest m = load_dataset(kFixtures + "/svo40.jsonl");
    CHECK(m.sentences.size() == 40);
    const auto counts = m.actual_counts();
    for (const auto& cls : kSvoClasses) CHECK(counts.at(to_string(cls)) == 10);
}

TEST_CASE("empty dataset is an error") {
    CHECK_THROWS_WITH_AS(load_dataset(write_temp("empty.jsonl", "")),
                         doctest::Contains("empty dataset"), DatasetError);
}

TEST_CASE("declared-count mismatch reports expected vs actual") {
    const std::string path = write_temp("mismatch.jsonl",
        R"({"kind":"dataset_header","declared_counts":{"TCM/aligned":10}})" "\n"
        R"({"kind":"sentence","id":"x1","text_en":"a b c","subject":"a","verb":"b","object":"c","system":"TCM","label":"aligned"})" "\n");
    try {
        load_dataset(path);
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("declared 10") != std::string::npos);
        CHECK(msg.find("actual 1") != std::string::npos);
    }
}

TEST_CASE("schema violations carry line numbers") {
    const std::string path = write_temp("badschema.jsonl",
        R"({"kind":"sentence","id":"x1","text_en":"a b c","subject":"a","verb":"b","object":"c","system":"TCM","label":"aligned"})" "\n"
        R"({"kind":"sentence","id":"x2","subject":"a","verb":"b","object":"c","system":"TCM","label":"aligned"})" "\n");
    try {
        load_dataset(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line == 2);  // needs text_zh or text_en
    }
}

TEST_CASE("save/load round trip preserves sentences and order") {
    const DatasetManifest m = load_dataset(kFixtures + "/svo40.jsonl");
    const std::string path = "/tmp/medbridge_ds_roundtrip.jsonl";
    save_dataset(m, path);
    const DatasetManifest back = load_dataset(path);
    REQUIRE(back.sentences.size() == m.sentences.size());
    for (std::size_t i = 0; i < m.sentences.size(); ++i) CHECK(back.sentences[i] == m.sentences[i]);
}

TEST_CASE("screening: normalizer catches full-width duplicates") {
    const std::vector<std::string> raw = {"肝火上炎", "肝火　上炎", "liver fire", "Liver  Fire!"};
    const ScreenResult r = screen_terms(raw, {});
    CHECK(r.kept.size() == 2);
    REQUIRE(r.removed.size() == 2);
    CHECK(r.removed[0].first == "肝火　上炎");  // ideographic space folded away
    CHECK(r.removed[0].second == "duplicate");
    CHECK(r.removed[1].second == "duplicate");
}

TEST_CASE("screening: expert lists merge with their own reasons") {
    const std::vector<std::string> raw = {"t1", "t2", "t3", "t4"};
    const std::vector<RemovalList> lists = {{"irrelevant", {"t2"}}, {"redundant", {"t4"}}};
    const ScreenResult r = screen_terms(raw, lists);
    CHECK(r.kept == std::vector<std::string>{"t1", "t3"});
    REQUIRE(r.removed.size() == 2);
    CHECK(r.removed[0] == std::pair<std::string, std::string>{"t2", "irrelevant"});
    CHECK(r.removed[1] == std::pair<std::string, std::string>{"t4", "redundant"});

    CHECK_THROWS_AS(screen_terms(raw, {{"oops", {"missing_term"}}}), DatasetError);
    CHECK_THROWS_AS(screen_terms({}, {}), DatasetError);
}

TEST_CASE("screening: kept has no duplicates under the normalizer, O(n^2) oracle") {
    std::mt19937 rng(2);
    std::vector<std::string> raw;
    for (int i = 0; i < 200; ++i) raw.push_back("term" + std::to_string(rng() % 120));
    const ScreenResult r = screen_terms(raw, {});
    CHECK(r.kept.size() + r.removed.size() == raw.size());
    for (std::size_t i = 0; i < r.kept.size(); ++i)
        for (std::size_t j = i + 1; j < r.kept.size(); ++j)
            CHECK(text::normalize_term(r.kept[i]) != text::normalize_term(r.kept[j]));
}

TEST_CASE("screening arithmetic: 3000 raw terms minus 199 removals keeps 2801") {
    // 2880 unique terms plus 120 normalizer-duplicates = 3000 raw inputs;
    // experts strike 79 more, so 199 fall out and 2801 remain.
    std::vector<std::string> raw;
    for (int i = 0; i < 2880; ++i) raw.push_back("term_" + std::to_string(i));
    for (int i = 0; i < 120; ++i) raw.push_back("term_" + std::to_string(i) + "　");
    REQUIRE(raw.size() == 3000);
    std::vector<RemovalList> lists;
    RemovalList experts{"irrelevance", {}};
    for (int i = 2880 - 79; i < 2880; ++i) experts.terms.push_back("term_" + std::to_string(i));
    lists.push_back(experts);
    const ScreenResult r = screen_terms(raw, lists);
    CHECK(r.kept.size() + r.removed.size() == 3000);
    CHECK(r.removed.size() == 199);
    CHECK(r.kept.size() == 2801);
}

TEST_CASE("stratified split: integer-exact case gives 2 per class") {
    const DatasetManifest m = synthetic({10, 10, 10, 10});
    for (std::uint64_t seed : {1ull, 9ull, 123ull}) {
        auto [train, test] = stratified_split(m, 0.2, seed);
        CHECK(train.sentences.size() == 32);
        CHECK(test.sentences.size() == 8);
        const auto counts = test.actual_counts();
        for (const auto& cls : kSvoClasses) CHECK(counts.at(to_string(cls)) == 2);
    }
}

TEST_CASE("stratified split is deterministic per seed") {
    const DatasetManifest m = synthetic({11, 13, 17, 19});
    auto [train1, test1] = stratified_split(m, 0.4, 99);
    auto [train2, test2] = stratified_split(m, 0.4, 99);
    REQUIRE(test1.sentences.size() == test2.sentences.size());
    for (std::size_t i = 0; i < test1.sentences.size(); ++i)
        CHECK(test1.sentences[i].id == test2.sentences[i].id);
    auto [train3, test3] = stratified_split(m, 0.4, 100);
    bool differs = test3.sentences.size() != test1.sentences.size();
    for (std::size_t i = 0; !differs && i < test1.sentences.size(); ++i)
        differs = test1.sentences[i].id != test3.sentences[i].id;
    CHECK(differs);  // different seed, different draw
}

TEST_CASE("stratified split on the benchmark class sizes stays within one of exact shares") {
    const DatasetManifest m = synthetic({613, 703, 697, 788});
    auto [train, test] = stratified_split(m, 0.3, 7);
    CHECK(train.sentences.size() + test.sentences.size() == 2801);
    const auto counts = test.actual_counts();
    const std::array<double, 4> exact = {0.3 * 613, 0.3 * 703, 0.3 * 697, 0.3 * 788};
    for (std::size_t cls = 0; cls < 4; ++cls) {
        const double got = static_cast<double>(counts.at(to_string(kSvoClasses[cls])));
        CHECK(std::abs(got - exact[cls]) <= 1.0);
    }
}

TEST_CASE("split partition laws: disjoint, covering, ids preserved") {
    const DatasetManifest m = synthetic({9, 5, 7, 3});
    auto [train, test] = stratified_split(m, 0.35, 3);
    std::set<std::string> seen;
    for (const auto& s : train.sentences) CHECK(seen.insert(s.id).second);
    for (const auto& s : test.sentences) CHECK(seen.insert(s.id).second);
    CHECK(seen.size() == m.sentences.size());
}

TEST_CASE("split preconditions") {
    const DatasetManifest m = synthetic({10, 10, 10, 10});
    CHECK_THROWS_AS(stratified_split(m, 0.0, 1), DatasetError);
    CHECK_THROWS_AS(stratified_split(m, 1.0, 1), DatasetError);
    const DatasetManifest tiny = synthetic({1, 10, 10, 10});
    CHECK_THROWS_AS(stratified_split(tiny, 0.5, 1), DatasetError);
}
