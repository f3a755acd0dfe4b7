#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "medbridge/kernels.hpp"
#include "medbridge/text.hpp"

namespace medbridge {

struct Corpus {
    std::vector<std::vector<std::string>> documents;  // token sequences
    text::TokenizerConfig tokenizer;
};

// Reads one document per line and tokenizes it.
Corpus load_corpus(const std::string& path, const text::TokenizerConfig& cfg);

enum class EmbeddingProvenance { CorpusStats, ExternalProvider };

struct EmbeddingTable {
    std::map<std::string, std::size_t> vocab;  // token -> row
    std::vector<std::vector<double>> vectors;  // |vocab| rows of dimension d
    std::size_t d = 0;
    EmbeddingProvenance provenance = EmbeddingProvenance::CorpusStats;

    const std::vector<double>* find(const std::string& token) const;
};

struct BuildOptions {
    std::size_t d = 64;
    std::size_t window = 4;
    std::uint64_t seed = 0;
    int power_iters = 100;
    kernels::ExecMode mode = kernels::ExecMode::Parallel;
};

struct EmbeddingError : std::runtime_error {
    explicit EmbeddingError(const std::string& msg) : std::runtime_error(msg) {}
};

// Co-occurrence counts within `window`, PPMI transform, rank-d truncation by
// seeded power iteration, L2-normalized rows. Deterministic for fixed
// (corpus, d, window, seed) regardless of exec mode or thread count.
EmbeddingTable build_embeddings(const Corpus& corpus, const BuildOptions& opts);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// k nearest rows by cosine, excluding the query row itself; descending
// similarity, ties broken lexicographically by token.
std::vector<std::pair<std::string, double>> top_k(const EmbeddingTable& table,
                                                  const std::string& query, std::size_t k);

void save_table(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_table(const std::string& path);

// Optional external embedding provider, spoken to over HTTP POST. Endpoint
// and bearer token come from the environment (MEDBRIDGE_EMBED_ENDPOINT,
// MEDBRIDGE_EMBED_TOKEN); timeout/retries from the config struct. Replies
// are validated against `d` before acceptance.
struct ProviderConfig {
    std::string endpoint;  // falls back to MEDBRIDGE_EMBED_ENDPOINT
    std::string token;     // falls back to MEDBRIDGE_EMBED_TOKEN
    int timeout_ms = 5000;
    int retries = 2;
    std::size_t batch_size = 64;
};

EmbeddingTable fetch_external_embeddings(const std::vector<std::string>& tokens, std::size_t d,
                                         const ProviderConfig& cfg);

}  // namespace medbridge
