#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "medbridge/embed.hpp"
#include "medbridge/kernels.hpp"

using namespace medbridge;

namespace {

// Synthetic corpus of two disjoint topic clusters; every document stays
// inside its own cluster's vocabulary.
Corpus two_cluster_corpus(std::uint32_t seed) {
    std::mt19937 rng(seed);
    Corpus corpus;
    const std::vector<std::string> a = {"a0", "a1", "a2", "a3", "a4", "a5"};
    const std::vector<std::string> b = {"b0", "b1", "b2", "b3", "b4", "b5"};
    std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
    for (int doc = 0; doc < 120; ++doc) {
        const auto& cluster = (doc % 2 == 0) ? a : b;
        std::vector<std::string> tokens;
        for (int t = 0; t < 12; ++t) tokens.push_back(cluster[pick(rng)]);
        corpus.documents.push_back(std::move(tokens));
    }
    return corpus;
}

BuildOptions small_opts() {
    BuildOptions opts;
    opts.d = 4;
    opts.window = 3;
    opts.seed = 17;
    return opts;
}

}  // namespace

TEST_CASE("tokenizer: whitespace for Latin, per-character for CJK, merges win") {
    text::TokenizerConfig cfg;
    CHECK(text::tokenize("Liver Fire rises", cfg) ==
          std::vector<std::string>{"liver", "fire", "rises"});
    CHECK(text::tokenize("肝火上炎", cfg) == std::vector<std::string>{"肝", "火", "上", "炎"});
    CHECK(text::tokenize("damp热", cfg) == std::vector<std::string>{"damp", "热"});

    cfg.merges = {"肝火", "肝火上炎"};  // longest match first regardless of list order
    CHECK(text::tokenize("肝火上炎也", cfg) == std::vector<std::string>{"肝火上炎", "也"});
    cfg.merges = {"肝火"};
    CHECK(text::tokenize("肝火上炎", cfg) == std::vector<std::string>{"肝火", "上", "炎"});

    // Full-width ASCII folds into plain Latin tokens.
    CHECK(text::tokenize("ＡＢＣ　x", cfg) == std::vector<std::string>{"abc", "x"});
}

TEST_CASE("term normalizer folds width, case, whitespace, punctuation") {
    CHECK(text::normalize_term("Liver  Fire!") == text::normalize_term("liver fire"));
    CHECK(text::normalize_term("肝火　上炎") == text::normalize_term("肝火上炎"));
    CHECK(text::normalize_term("ＡＢＣ") == "abc");
    CHECK(text::normalize_term("气、血。") == text::normalize_term("气血"));
}

TEST_CASE("intra-cluster cosine beats inter-cluster cosine") {
    const Corpus corpus = two_cluster_corpus(2024);
    const EmbeddingTable table = build_embeddings(corpus, small_opts());

    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    std::vector<std::string> vocab;
    for (const auto& [tok, row] : table.vocab) vocab.push_back(tok);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        for (std::size_t j = i + 1; j < vocab.size(); ++j) {
            const double sim = cosine_similarity(table.vectors[table.vocab.at(vocab[i])],
                                                 table.vectors[table.vocab.at(vocab[j])]);
            if (vocab[i][0] == vocab[j][0]) {
                intra += sim;
                ++n_intra;
            } else {
                inter += sim;
                ++n_inter;
            }
        }
    }
    CHECK(intra / n_intra > inter / n_inter);
}

TEST_CASE("builds are deterministic and mode-independent") {
    const Corpus corpus = two_cluster_corpus(7);
    BuildOptions opts = small_opts();
    const EmbeddingTable once = build_embeddings(corpus, opts);
    const EmbeddingTable twice = build_embeddings(corpus, opts);
    opts.mode = kernels::ExecMode::Serial;
    const EmbeddingTable serial = build_embeddings(corpus, opts);
    REQUIRE(once.vectors.size() == twice.vectors.size());
    for (std::size_t i = 0; i < once.vectors.size(); ++i) {
        for (std::size_t k = 0; k < once.d; ++k) {
            CHECK(once.vectors[i][k] == twice.vectors[i][k]);
            CHECK(once.vectors[i][k] == serial.vectors[i][k]);
        }
    }
}

TEST_CASE("rows are unit norm") {
    const EmbeddingTable table = build_embeddings(two_cluster_corpus(3), small_opts());
    for (const auto& row : table.vectors)
        CHECK(kernels::norm2(row) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("d larger than the vocabulary is rejected with advice") {
    Corpus tiny;
    tiny.documents = {{"x", "y", "z"}};
    BuildOptions opts;
    opts.d = 10;
    CHECK_THROWS_WITH_AS(build_embeddings(tiny, opts),
                         doctest::Contains("smaller"), EmbeddingError);
}

TEST_CASE("cosine trivia and the naive oracle") {
    const std::vector<double> x = {1, 2, 3};
    CHECK(cosine_similarity(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), EmbeddingError);
    CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), EmbeddingError);

    std::mt19937 rng(88);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(6), b(6);
        for (std::size_t i = 0; i < 6; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
        }
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        const double expect = dot / (std::sqrt(na) * std::sqrt(nb));
        CHECK(cosine_similarity(a, b) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("top_k equals the full-sort oracle on a 50-token table") {
    std::mt19937 rng(4242);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    EmbeddingTable table;
    table.d = 8;
    for (int i = 0; i < 50; ++i) {
        const std::string tok = "t" + std::to_string(i);
        table.vocab[tok] = table.vectors.size();
        std::vector<double> v(8);
        for (auto& x : v) x = dist(rng);
        table.vectors.push_back(std::move(v));
    }
    const std::string query = "t7";
    const auto got = top_k(table, query, 5);
    REQUIRE(got.size() == 5);

    // Oracle: sort every candidate by (similarity desc, token asc).
    std::vector<std::pair<std::string, double>> all;
    for (const auto& [tok, row] : table.vocab) {
        if (tok == query) continue;
        all.emplace_back(tok, cosine_similarity(table.vectors[table.vocab.at(query)],
                                                table.vectors[row]));
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].first == all[i].first);
        CHECK(got[i].second == all[i].second);
    }
    // Descending except lexicographic tie groups.
    for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].second >= got[i].second);
}

TEST_CASE("top_k edge cases") {
    EmbeddingTable table;
    table.d = 2;
    table.vocab = {{"p", 0}, {"q", 1}};
    table.vectors = {{1, 0}, {0.6, 0.8}};
    const auto got = top_k(table, "p", 1);
    REQUIRE(got.size() == 1);
    CHECK(got[0].first == "q");  // query itself excluded
    CHECK_THROWS_AS(top_k(table, "nope", 1), EmbeddingError);
    CHECK(top_k(table, "p", 10).size() == 1);  // k beyond table size
}

TEST_CASE("table save/load round trip preserves vectors exactly") {
    const EmbeddingTable table = build_embeddings(two_cluster_corpus(5), small_opts());
    const std::string path = "/tmp/medbridge_table.json";
    save_table(table, path);
    const EmbeddingTable back = load_table(path);
    REQUIRE(back.vocab == table.vocab);
    REQUIRE(back.d == table.d);
    for (std::size_t i = 0; i < table.vectors.size(); ++i)
        for (std::size_t k = 0; k < table.d; ++k)
            CHECK(back.vectors[i][k] == table.vectors[i][k]);
}

TEST_CASE("external provider: validation, retries, dimension checks") {
    httplib::Server server;
    std::atomic<int> failures_left{1};
    server.Post("/v1/embed", [&](const httplib::Request& req, httplib::Response& res) {
        if (failures_left.fetch_sub(1) > 0) {
            res.status = 500;
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["vectors"] = nlohmann::json::array();
        for (const auto& tok : body["tokens"]) {
            (void)tok;
            out["vectors"].push_back(std::vector<double>{1.0, 0.0, 0.0});
        }
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    ProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
    cfg.retries = 2;

    // First request eats the injected 500; the retry succeeds.
    const EmbeddingTable table = fetch_external_embeddings({"alpha", "beta"}, 3, cfg);
    CHECK(table.vocab.size() == 2);
    CHECK(table.provenance == EmbeddingProvenance::ExternalProvider);
    CHECK(table.vectors[0].size() == 3);

    // Dimension mismatch must be rejected.
    CHECK_THROWS_AS(fetch_external_embeddings({"gamma"}, 7, cfg), EmbeddingError);

    server.stop();
    server_thread.join();
}

TEST_CASE("external provider: unreachable endpoint fails after retries") {
    ProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9";  // discard port, nothing listens
    cfg.timeout_ms = 200;
    cfg.retries = 1;
    CHECK_THROWS_AS(fetch_external_embeddings({"x"}, 2, cfg), EmbeddingError);
}
