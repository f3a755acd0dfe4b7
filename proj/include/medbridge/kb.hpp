#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "medbridge/bayes.hpp"
#include "medbridge/fuzzy.hpp"
#include "medbridge/rule.hpp"

namespace medbridge {

enum class System { TCM, WM, Bridge };

System system_from_string(const std::string& s, int line = 0);
std::string to_string(System s);

struct Concept {
    std::string id;
    std::string name_zh;
    std::string name_en;
    System system = System::TCM;
    std::set<std::string> labels;
    std::optional<std::vector<double>> embedding;

    bool operator==(const Concept&) const = default;
};

struct Proposition {
    std::string id;
    std::string statement;
    std::optional<std::string> subject_concept;
    System system = System::TCM;  // TCM or WM only

    bool operator==(const Proposition&) const = default;
};

struct BridgeLink {
    std::string tcm_prop;
    std::string wm_node;
    double strength = 1.0;  // in [0,1]

    bool operator==(const BridgeLink&) const = default;
};

// Licensed subject-verb-object relation used by the deterministic alignment
// judge.
struct Relation {
    std::string subject;     // concept id
    std::string verb_class;  // registered verb class name
    std::string object;      // concept id

    bool operator==(const Relation&) const = default;
    auto operator<=>(const Relation&) const = default;
};

struct VerbClass {
    std::string name;
    System system = System::TCM;
    std::set<std::string> verbs;  // surface forms, matched after normalization

    bool operator==(const VerbClass&) const = default;
};

// Mutually exclusive proposition pair (manifest-declared; the classics never
// enumerate which assertions conflict, so exclusions are data).
struct Exclusion {
    std::string a;
    std::string b;

    bool operator==(const Exclusion&) const = default;
};

struct KbConfig {
    std::size_t embedding_dim = 64;
    double tau_high = 0.7;
    double tau_low = 0.3;
    double theta = 0.6;

    bool operator==(const KbConfig&) const = default;
};

// A named case: fuzzy-side evidence plus observed WM node states.
struct CaseEvidence {
    std::string id;
    EvidenceSet fuzzy;
    Assignment wm_observations;
};

struct Contradiction {
    enum class Kind {
        DuplicateConcept,
        MissingProposition,
        ExclusiveConsequents,
        BayesCycle,
        StratificationViolation,
        MissingBridgeEndpoint,
        DuplicateBridge,
        UnregisteredLabel,
        MissingConcept,
        EmbeddingDimMismatch,
        BadCpt,
        BadRelation,
        BadExclusion,
    };
    Kind kind;
    std::string subject;  // offending id / pair
    std::string message;
};

std::string to_string(Contradiction::Kind k);

struct ConsistencyError : std::runtime_error {
    explicit ConsistencyError(std::vector<Contradiction> found);
    std::vector<Contradiction> findings;
};

struct KnowledgeBase {
    KbConfig config;
    std::set<std::string> sigma;  // registered label alphabet
    std::vector<Concept> concepts;
    std::vector<Proposition> propositions;
    std::vector<Rule> rules;
    std::vector<Exclusion> exclusions;
    std::vector<BridgeLink> bridges;
    std::vector<Relation> relations;
    std::vector<VerbClass> verb_classes;
    std::vector<MembershipCurve> curves;
    std::map<std::string, CaseEvidence> evidences;
    BayesNet bayes_net;
    std::int64_t version = 1;

    const Concept* find_concept(const std::string& id) const;
    const Proposition* find_proposition(const std::string& id) const;

    // Surface-form lookup for SVO judging: id, Chinese name, or normalized
    // English name.
    const Concept* resolve_concept(const std::string& surface) const;
    const VerbClass* resolve_verb(const std::string& surface) const;
    bool has_relation(const std::string& subject, const std::string& verb_class,
                      const std::string& object) const;
};

// Everything an extension may add. Individually well-formed by construction;
// cross-references are validated against the merged KB.
struct KbAdditions {
    std::vector<std::string> labels;
    std::vector<Concept> concepts;
    std::vector<Proposition> propositions;
    std::vector<Rule> rules;
    std::vector<Exclusion> exclusions;
    std::vector<BridgeLink> bridges;
    std::vector<Relation> relations;
    std::vector<BayesNode> bayes_nodes;
    std::vector<Cpt> cpts;
};

// Parses and validates a JSON-lines manifest; check_consistency has passed
// on the result. Throws IoError / SchemaError (with line numbers) /
// ConsistencyError.
KnowledgeBase load_kb(const std::string& path);

// Canonical manifest serialization; load(save(kb)) is semantically equal.
void save_kb(const KnowledgeBase& kb, const std::string& path);
std::string kb_to_manifest(const KnowledgeBase& kb);

// Pure check; returns every violation rather than throwing.
std::vector<Contradiction> check_consistency(const KnowledgeBase& kb);

// Returns a new KB with version+1, or throws ConsistencyError leaving the
// input untouched.
KnowledgeBase extend_kb(const KnowledgeBase& kb, const KbAdditions& additions);

// Parses addition records (same record grammar as the manifest). The base
// KB, when given, supplies node layouts for CPTs whose parents already
// exist.
KbAdditions load_additions(const std::string& path, const KnowledgeBase* base = nullptr);

// Loads a named evidence record (or the only one) from a manifest-format
// file that may also be a full KB.
CaseEvidence load_evidence(const std::string& path, const std::string& case_id = "");

}  // namespace medbridge
