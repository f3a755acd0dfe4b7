#include "medbridge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "medbridge/common.hpp"
#include "medbridge/jsonl.hpp"
#include "medbridge/text.hpp"

namespace medbridge {

using nlohmann::json;

std::string to_string(SvoSystem s) { return s == SvoSystem::TCM ? "TCM" : "WM"; }

std::string to_string(const SvoClass& c) {
    return to_string(c.system) + "/" + to_string(c.label);
}

std::map<std::string, long> DatasetManifest::actual_counts() const {
    std::map<std::string, long> counts;
    for (const auto& cls : kSvoClasses) counts[to_string(cls)] = 0;
    for (const auto& s : sentences) ++counts[to_string(s.svo_class())];
    return counts;
}

namespace {

SvoSystem svo_system_from(const std::string& s, int line) {
    if (s == "TCM") return SvoSystem::TCM;
    if (s == "WM") return SvoSystem::WM;
    throw SchemaError("unknown system '" + s + "' (expected TCM|WM)", line);
}

Verdict verdict_from(const std::string& s, int line) {
    if (s == "aligned") return Verdict::Aligned;
    if (s == "misaligned") return Verdict::Misaligned;
    throw SchemaError("unknown label '" + s + "' (expected aligned|misaligned)", line);
}

SVOSentence parse_sentence(const json& rec, int line) {
    SVOSentence s;
    s.id = jsonl::require_string(rec, "id", line);
    s.text_zh = jsonl::get_string_or(rec, "text_zh", "");
    s.text_en = jsonl::get_string_or(rec, "text_en", "");
    s.subject = jsonl::require_string(rec, "subject", line);
    s.verb = jsonl::require_string(rec, "verb", line);
    s.object = jsonl::require_string(rec, "object", line);
    s.system = svo_system_from(jsonl::require_string(rec, "system", line), line);
    s.label = verdict_from(jsonl::require_string(rec, "label", line), line);
    if (s.subject.empty() || s.verb.empty() || s.object.empty())
        throw SchemaError("subject/verb/object must be non-empty", line);
    if (s.text_zh.empty() && s.text_en.empty())
        throw SchemaError("sentence needs text_zh or text_en", line);
    return s;
}

json sentence_to_record(const SVOSentence& s) {
    json rec;
    rec["kind"] = "sentence";
    rec["id"] = s.id;
    if (!s.text_zh.empty()) rec["text_zh"] = s.text_zh;
    if (!s.text_en.empty()) rec["text_en"] = s.text_en;
    rec["subject"] = s.subject;
    rec["verb"] = s.verb;
    rec["object"] = s.object;
    rec["system"] = to_string(s.system);
    rec["label"] = to_string(s.label);
    return rec;
}

}  // namespace

DatasetManifest load_dataset(const std::string& path) {
    DatasetManifest m;
    bool saw_header = false;
    jsonl::for_each_record(path, [&](const json& rec, int line) {
        const std::string kind = jsonl::get_string_or(rec, "kind", "sentence");
        if (kind == "dataset_header") {
            if (saw_header) throw SchemaError("duplicate dataset_header", line);
            saw_header = true;
            if (auto it = rec.find("declared_counts"); it != rec.end()) {
                if (!it->is_object()) throw SchemaError("'declared_counts' must be an object", line);
                for (auto kv = it->begin(); kv != it->end(); ++kv) {
                    bool known = false;
                    for (const auto& cls : kSvoClasses)
                        if (to_string(cls) == kv.key()) known = true;
                    if (!known)
                        throw SchemaError("unknown class '" + kv.key() + "' in declared_counts",
                                          line);
                    m.declared_counts[kv.key()] = kv.value().get<long>();
                }
            }
            return;
        }
        if (kind != "sentence")
            throw SchemaError("unknown record kind '" + kind + "'", line);
        m.sentences.push_back(parse_sentence(rec, line));
    });

    if (m.sentences.empty()) throw DatasetError("empty dataset: " + path);

    std::set<std::string> ids;
    for (const auto& s : m.sentences)
        if (!ids.insert(s.id).second)
            throw DatasetError("duplicate sentence id '" + s.id + "'");

    if (!m.declared_counts.empty()) {
        const auto actual = m.actual_counts();
        std::string mismatches;
        for (const auto& [cls, declared] : m.declared_counts) {
            const long got = actual.count(cls) ? actual.at(cls) : 0;
            if (got != declared) {
                mismatches += "\n  " + cls + ": declared " + std::to_string(declared) +
                              ", actual " + std::to_string(got);
            }
        }
        if (!mismatches.empty())
            throw DatasetError("declared counts do not match the file contents:" + mismatches);
    }
    return m;
}

void save_dataset(const DatasetManifest& manifest, const std::string& path) {
    std::vector<json> records;
    if (!manifest.declared_counts.empty()) {
        json header;
        header["kind"] = "dataset_header";
        header["declared_counts"] = manifest.declared_counts;
        records.push_back(std::move(header));
    }
    for (const auto& s : manifest.sentences) records.push_back(sentence_to_record(s));
    jsonl::write_records(path, records);
}

ScreenResult screen_terms(const std::vector<std::string>& raw_terms,
                          const std::vector<RemovalList>& expert_removals) {
    if (raw_terms.empty()) throw DatasetError("no terms to screen");

    std::vector<std::string> normalized;
    normalized.reserve(raw_terms.size());
    std::set<std::string> known;
    for (const auto& term : raw_terms) {
        normalized.push_back(text::normalize_term(term));
        known.insert(normalized.back());
    }

    std::map<std::string, std::string> expert_reason;  // normalized term -> reason
    for (const auto& list : expert_removals) {
        for (const auto& term : list.terms) {
            const std::string norm = text::normalize_term(term);
            if (!known.count(norm))
                throw DatasetError("expert removal list '" + list.reason +
                                   "' references unknown term '" + term + "'");
            expert_reason.emplace(norm, list.reason);
        }
    }

    ScreenResult result;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < raw_terms.size(); ++i) {
        const std::string& term = raw_terms[i];
        const std::string& norm = normalized[i];
        if (!seen.insert(norm).second) {
            result.removed.emplace_back(term, "duplicate");
            continue;
        }
        if (auto it = expert_reason.find(norm); it != expert_reason.end()) {
            result.removed.emplace_back(term, it->second);
            continue;
        }
        result.kept.push_back(term);
    }
    return result;
}

std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             double test_fraction,
                                                             std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw DatasetError("test_fraction must lie strictly between 0 and 1");

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.sentences.size(); ++i)
        by_class[to_string(manifest.sentences[i].svo_class())].push_back(i);
    for (const auto& [cls, idxs] : by_class) {
        if (idxs.size() < 2)
            throw DatasetError("class " + cls + " has fewer than 2 sentences; cannot stratify");
    }

    // Largest-remainder allocation of the rounded global test total across
    // classes keeps every class within one sentence of its exact share.
    struct Share {
        std::string cls;
        long base;
        double remainder;
    };
    std::vector<Share> shares;
    long assigned = 0;
    double exact_total = 0.0;
    for (const auto& [cls, idxs] : by_class) {
        const double exact = test_fraction * static_cast<double>(idxs.size());
        exact_total += exact;
        Share s{cls, static_cast<long>(exact), exact - static_cast<double>(static_cast<long>(exact))};
        assigned += s.base;
        shares.push_back(std::move(s));
    }
    long want = std::lround(exact_total);
    std::vector<std::size_t> order(shares.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (shares[a].remainder != shares[b].remainder)
            return shares[a].remainder > shares[b].remainder;
        return shares[a].cls < shares[b].cls;
    });
    std::map<std::string, long> take;
    for (const auto& s : shares) take[s.cls] = s.base;
    for (std::size_t i = 0; assigned < want && i < order.size(); ++i, ++assigned)
        ++take[shares[order[i]].cls];

    DatasetManifest train, test;
    std::vector<char> in_test(manifest.sentences.size(), 0);
    std::size_t class_index = 0;
    for (auto& [cls, idxs] : by_class) {
        // Class-keyed seed stream so the draw for one class does not depend
        // on how many sentences the previous classes held.
        std::seed_seq seq{seed, static_cast<std::uint64_t>(class_index++)};
        std::mt19937_64 rng(seq);
        std::shuffle(idxs.begin(), idxs.end(), rng);
        const long n_test = std::min<long>(take[cls], static_cast<long>(idxs.size()) - 1);
        for (long i = 0; i < n_test; ++i) in_test[idxs[static_cast<std::size_t>(i)]] = 1;
    }
    for (std::size_t i = 0; i < manifest.sentences.size(); ++i) {
        (in_test[i] ? test : train).sentences.push_back(manifest.sentences[i]);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace medbridge
