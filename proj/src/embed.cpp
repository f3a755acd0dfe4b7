#include "medbridge/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "medbridge/common.hpp"
#include "medbridge/jsonl.hpp"

#include <httplib.h>

namespace medbridge {

using nlohmann::json;

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    auto it = vocab.find(token);
    if (it == vocab.end()) return nullptr;
    return &vectors[it->second];
}

Corpus load_corpus(const std::string& path, const text::TokenizerConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus: " + path);
    Corpus corpus;
    corpus.tokenizer = cfg;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto tokens = text::tokenize(line, cfg);
        if (!tokens.empty()) corpus.documents.push_back(std::move(tokens));
    }
    if (corpus.documents.empty()) throw EmbeddingError("corpus is empty: " + path);
    return corpus;
}

namespace {

// Fallback unit vector for tokens with an all-zero PPMI row (no
// co-occurrences). Direction is an arbitrary but stable function of the row
// index, keeping the unit-norm invariant and build determinism.
std::vector<double> isolated_row(std::size_t row, std::size_t d) {
    std::uint64_t s = row * 0x9E3779B97F4A7C15ULL + 0x1234ABCDULL;
    std::vector<double> v(d);
    double n2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        v[i] = static_cast<double>(s >> 11) * 0x1.0p-53 - 0.5;
        n2 += v[i] * v[i];
    }
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
}

}  // namespace

EmbeddingTable build_embeddings(const Corpus& corpus, const BuildOptions& opts) {
    if (opts.d < 2) throw EmbeddingError("embedding dimension must be >= 2");
    if (opts.window < 1) throw EmbeddingError("window must be >= 1");
    if (corpus.documents.empty()) throw EmbeddingError("corpus is empty");

    // Lexicographic vocabulary order fixes row numbering independent of
    // document order-of-first-appearance.
    std::map<std::string, std::size_t> vocab;
    for (const auto& doc : corpus.documents)
        for (const auto& tok : doc) vocab.emplace(tok, 0);
    std::size_t idx = 0;
    for (auto& [tok, row] : vocab) row = idx++;

    const std::size_t n = vocab.size();
    if (n < opts.d)
        throw EmbeddingError("vocabulary size " + std::to_string(n) +
                             " is smaller than d=" + std::to_string(opts.d) +
                             "; choose a smaller dimension");

    kernels::Matrix counts(n, n);
    for (const auto& doc : corpus.documents) {
        std::vector<std::size_t> ids(doc.size());
        for (std::size_t i = 0; i < doc.size(); ++i) ids[i] = vocab.at(doc[i]);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const std::size_t hi = std::min(ids.size(), i + opts.window + 1);
            for (std::size_t j = i + 1; j < hi; ++j) {
                counts.at(ids[i], ids[j]) += 1.0;
                counts.at(ids[j], ids[i]) += 1.0;
            }
        }
    }

    kernels::ppmi_inplace(counts, opts.mode);
    const auto eigs =
        kernels::power_iteration_eigs(counts, opts.d, opts.seed, opts.power_iters, opts.mode);

    EmbeddingTable table;
    table.vocab = std::move(vocab);
    table.d = opts.d;
    table.provenance = EmbeddingProvenance::CorpusStats;
    table.vectors.assign(n, std::vector<double>(opts.d, 0.0));
    for (std::size_t k = 0; k < eigs.size(); ++k) {
        const double scale = std::sqrt(std::fabs(eigs[k].value));
        for (std::size_t i = 0; i < n; ++i) table.vectors[i][k] = scale * eigs[k].vector[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double nrm = kernels::norm2(table.vectors[i]);
        if (nrm <= 1e-30) {
            table.vectors[i] = isolated_row(i, opts.d);
        } else {
            for (auto& x : table.vectors[i]) x /= nrm;
        }
    }
    return table;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw EmbeddingError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    const double na = kernels::norm2(a);
    const double nb = kernels::norm2(b);
    if (na <= 0.0 || nb <= 0.0) throw EmbeddingError("cosine: zero vector");
    return kernels::dot(a, b) / (na * nb);
}

std::vector<std::pair<std::string, double>> top_k(const EmbeddingTable& table,
                                                  const std::string& query, std::size_t k) {
    auto it = table.vocab.find(query);
    if (it == table.vocab.end()) throw EmbeddingError("unknown query token: " + query);
    if (k < 1) throw EmbeddingError("k must be >= 1");
    const auto& q = table.vectors[it->second];

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(table.vocab.size() - 1);
    for (const auto& [tok, row] : table.vocab) {
        if (tok == query) continue;
        scored.emplace_back(tok, cosine_similarity(q, table.vectors[row]));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

void save_table(const EmbeddingTable& table, const std::string& path) {
    json j;
    j["d"] = table.d;
    j["provenance"] =
        table.provenance == EmbeddingProvenance::CorpusStats ? "corpus_stats" : "external_provider";
    std::vector<std::string> vocab(table.vocab.size());
    for (const auto& [tok, row] : table.vocab) vocab[row] = tok;
    j["vocab"] = vocab;
    j["vectors"] = table.vectors;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write table: " + path);
    out << j.dump() << '\n';
}

EmbeddingTable load_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open table: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("invalid JSON in table file: " + path);
    EmbeddingTable table;
    table.d = static_cast<std::size_t>(jsonl::require_number(j, "d", 0));
    table.provenance = jsonl::get_string_or(j, "provenance", "corpus_stats") == "external_provider"
                           ? EmbeddingProvenance::ExternalProvider
                           : EmbeddingProvenance::CorpusStats;
    const auto& vocab = jsonl::require_field(j, "vocab", 0);
    const auto& vectors = jsonl::require_field(j, "vectors", 0);
    if (!vocab.is_array() || !vectors.is_array() || vocab.size() != vectors.size())
        throw SchemaError("table vocab/vectors mismatch");
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        table.vocab[vocab[i].get<std::string>()] = i;
        auto row = vectors[i].get<std::vector<double>>();
        if (row.size() != table.d) throw SchemaError("vector row has wrong dimension");
        table.vectors.push_back(std::move(row));
    }
    return table;
}

EmbeddingTable fetch_external_embeddings(const std::vector<std::string>& tokens, std::size_t d,
                                         const ProviderConfig& cfg) {
    std::string endpoint = cfg.endpoint;
    if (endpoint.empty()) {
        if (const char* env = std::getenv("MEDBRIDGE_EMBED_ENDPOINT")) endpoint = env;
    }
    if (endpoint.empty())
        throw EmbeddingError("no provider endpoint (set MEDBRIDGE_EMBED_ENDPOINT)");
    std::string token = cfg.token;
    if (token.empty()) {
        if (const char* env = std::getenv("MEDBRIDGE_EMBED_TOKEN")) token = env;
    }

    httplib::Client client(endpoint);
    client.set_connection_timeout(0, cfg.timeout_ms * 1000);
    client.set_read_timeout(0, cfg.timeout_ms * 1000);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    EmbeddingTable table;
    table.d = d;
    table.provenance = EmbeddingProvenance::ExternalProvider;

    for (std::size_t start = 0; start < tokens.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(tokens.size(), start + cfg.batch_size);
        json req;
        req["tokens"] = std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                                 tokens.begin() + static_cast<std::ptrdiff_t>(end));
        req["d"] = d;

        httplib::Result res;
        for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
            res = client.Post("/v1/embed", headers, req.dump(), "application/json");
            if (res && res->status == 200) break;
        }
        if (!res || res->status != 200)
            throw EmbeddingError("provider request failed after " +
                                 std::to_string(cfg.retries + 1) + " attempt(s)");

        json body = json::parse(res->body, nullptr, false);
        if (body.is_discarded() || !body.contains("vectors") || !body["vectors"].is_array() ||
            body["vectors"].size() != end - start)
            throw EmbeddingError("provider reply malformed");
        for (std::size_t i = 0; i < end - start; ++i) {
            auto row = body["vectors"][i].get<std::vector<double>>();
            if (row.size() != d)
                throw EmbeddingError("provider returned dimension " + std::to_string(row.size()) +
                                     ", expected " + std::to_string(d));
            table.vocab[tokens[start + i]] = table.vectors.size();
            table.vectors.push_back(std::move(row));
        }
    }
    return table;
}

}  // namespace medbridge
