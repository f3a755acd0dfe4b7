#include "medbridge/kb.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "medbridge/common.hpp"
#include "medbridge/jsonl.hpp"
#include "medbridge/text.hpp"

namespace medbridge {

using nlohmann::json;

System system_from_string(const std::string& s, int line) {
    if (s == "TCM") return System::TCM;
    if (s == "WM") return System::WM;
    if (s == "Bridge") return System::Bridge;
    throw SchemaError("unknown system '" + s + "' (expected TCM|WM|Bridge)", line);
}

std::string to_string(System s) {
    switch (s) {
        case System::TCM: return "TCM";
        case System::WM: return "WM";
        default: return "Bridge";
    }
}

std::string to_string(Contradiction::Kind k) {
    using K = Contradiction::Kind;
    switch (k) {
        case K::DuplicateConcept: return "duplicate_concept";
        case K::MissingProposition: return "missing_proposition";
        case K::ExclusiveConsequents: return "exclusive_consequents";
        case K::BayesCycle: return "bayes_cycle";
        case K::StratificationViolation: return "stratification_violation";
        case K::MissingBridgeEndpoint: return "missing_bridge_endpoint";
        case K::DuplicateBridge: return "duplicate_bridge";
        case K::UnregisteredLabel: return "unregistered_label";
        case K::MissingConcept: return "missing_concept";
        case K::EmbeddingDimMismatch: return "embedding_dim_mismatch";
        case K::BadCpt: return "bad_cpt";
        case K::BadRelation: return "bad_relation";
        case K::BadExclusion: return "bad_exclusion";
    }
    return "unknown";
}

ConsistencyError::ConsistencyError(std::vector<Contradiction> found)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << found.size() << " contradiction(s):";
          for (const auto& c : found)
              os << "\n  " << to_string(c.kind) << ": " << c.message;
          return os.str();
      }()),
      findings(std::move(found)) {}

const Concept* KnowledgeBase::find_concept(const std::string& id) const {
    for (const auto& c : concepts)
        if (c.id == id) return &c;
    return nullptr;
}

const Proposition* KnowledgeBase::find_proposition(const std::string& id) const {
    for (const auto& p : propositions)
        if (p.id == id) return &p;
    return nullptr;
}

const Concept* KnowledgeBase::resolve_concept(const std::string& surface) const {
    if (const Concept* c = find_concept(surface)) return c;
    for (const auto& c : concepts)
        if (c.name_zh == surface) return &c;
    const std::string norm = text::normalize_term(surface);
    if (norm.empty()) return nullptr;
    for (const auto& c : concepts)
        if (text::normalize_term(c.name_en) == norm || text::normalize_term(c.name_zh) == norm)
            return &c;
    return nullptr;
}

const VerbClass* KnowledgeBase::resolve_verb(const std::string& surface) const {
    const std::string norm = text::normalize_term(surface);
    for (const auto& vc : verb_classes) {
        for (const auto& v : vc.verbs)
            if (v == surface || text::normalize_term(v) == norm) return &vc;
    }
    return nullptr;
}

bool KnowledgeBase::has_relation(const std::string& subject, const std::string& verb_class,
                                 const std::string& object) const {
    for (const auto& r : relations)
        if (r.subject == subject && r.verb_class == verb_class && r.object == object) return true;
    return false;
}

namespace {

struct PendingCpt {
    json rec;
    int line;
};

double range01(double v, const std::string& what, int line) {
    if (v < 0.0 || v > 1.0)
        throw SchemaError(what + " must lie in [0,1], got " + std::to_string(v), line);
    return v;
}

Concept parse_concept(const json& rec, int line) {
    Concept c;
    c.id = jsonl::require_string(rec, "id", line);
    c.name_zh = jsonl::get_string_or(rec, "name_zh", "");
    c.name_en = jsonl::get_string_or(rec, "name_en", "");
    c.system = system_from_string(jsonl::get_string_or(rec, "system", "TCM"), line);
    if (auto it = rec.find("labels"); it != rec.end()) {
        if (!it->is_array()) throw SchemaError("'labels' must be an array", line);
        for (const auto& l : *it) {
            if (!l.is_string()) throw SchemaError("labels must be strings", line);
            std::string name = l.get<std::string>();
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            c.labels.insert(std::move(name));
        }
    }
    if (auto it = rec.find("embedding"); it != rec.end() && !it->is_null()) {
        if (!it->is_array()) throw SchemaError("'embedding' must be an array of numbers", line);
        c.embedding = it->get<std::vector<double>>();
    }
    return c;
}

Proposition parse_proposition(const json& rec, int line) {
    Proposition p;
    p.id = jsonl::require_string(rec, "id", line);
    p.statement = jsonl::get_string_or(rec, "statement", "");
    if (auto it = rec.find("subject_concept"); it != rec.end() && !it->is_null())
        p.subject_concept = it->get<std::string>();
    const System sys = system_from_string(jsonl::get_string_or(rec, "system", "TCM"), line);
    if (sys == System::Bridge)
        throw SchemaError("propositions belong to TCM or WM, not Bridge", line);
    p.system = sys;
    return p;
}

Rule parse_rule_record(const json& rec, int line) {
    Rule r;
    try {
        r = parse_rule(jsonl::require_string(rec, "text", line));
    } catch (const std::runtime_error& e) {
        throw SchemaError(std::string("rule: ") + e.what(), line);
    }
    r.id = jsonl::require_string(rec, "id", line);
    r.source = jsonl::get_string_or(rec, "source", "");
    return r;
}

BayesNode parse_bayes_node(const json& rec, int line) {
    BayesNode n;
    n.id = jsonl::require_string(rec, "id", line);
    const auto& states = jsonl::require_field(rec, "states", line);
    if (!states.is_array() || states.size() < 2)
        throw SchemaError("'states' must be an array of >= 2 names", line);
    n.states = states.get<std::vector<std::string>>();
    if (auto it = rec.find("parents"); it != rec.end() && !it->is_null())
        n.parents = it->get<std::vector<std::string>>();
    const std::string role = jsonl::get_string_or(rec, "role", "WM");
    const System sys = system_from_string(role, line);
    n.role = sys == System::TCM ? NodeRole::TCM
                                : (sys == System::WM ? NodeRole::WM : NodeRole::Bridge);
    if (auto it = rec.find("present_state"); it != rec.end() && !it->is_null())
        n.present_state = it->get<std::string>();
    return n;
}

MembershipCurve parse_curve(const json& rec, int line) {
    MembershipCurve c;
    c.observation = jsonl::require_string(rec, "observation", line);
    const auto& points = jsonl::require_field(rec, "points", line);
    if (!points.is_array() || points.empty())
        throw SchemaError("'points' must be a non-empty array of [x, mu] pairs", line);
    double last_x = 0.0;
    bool first = true;
    for (const auto& pt : points) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
            throw SchemaError("curve point must be [x, mu]", line);
        const double x = pt[0].get<double>();
        const double mu = range01(pt[1].get<double>(), "curve mu", line);
        if (!first && x <= last_x)
            throw SchemaError("curve x values must be strictly increasing", line);
        last_x = x;
        first = false;
        c.breakpoints.emplace_back(x, mu);
    }
    return c;
}

CaseEvidence parse_evidence(const json& rec, int line) {
    CaseEvidence ev;
    ev.id = jsonl::get_string_or(rec, "id", "case");
    if (auto it = rec.find("base_degrees"); it != rec.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError("'base_degrees' must be an object", line);
        for (auto kv = it->begin(); kv != it->end(); ++kv)
            ev.fuzzy.base_degrees[kv.key()] =
                range01(kv.value().get<double>(), "degree for '" + kv.key() + "'", line);
    }
    if (auto it = rec.find("observations"); it != rec.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError("'observations' must be an object", line);
        for (auto kv = it->begin(); kv != it->end(); ++kv)
            ev.fuzzy.raw_observations[kv.key()] = kv.value().get<double>();
    }
    if (auto it = rec.find("wm_observations"); it != rec.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError("'wm_observations' must be an object", line);
        for (auto kv = it->begin(); kv != it->end(); ++kv)
            ev.wm_observations[kv.key()] = kv.value().get<std::string>();
    }
    return ev;
}

// Converts a cpt record's named rows into the flat mixed-radix layout.
Cpt cpt_from_record(const json& rec, int line, const BayesNet& net) {
    Cpt cpt;
    cpt.node = jsonl::require_string(rec, "node", line);
    const BayesNode& n = net.node(cpt.node);
    std::size_t rows = 1;
    for (const auto& p : n.parents) rows *= net.node(p).states.size();
    const std::size_t k = n.states.size();
    cpt.table.assign(rows * k, -1.0);

    const auto& jrows = jsonl::require_field(rec, "rows", line);
    if (!jrows.is_array()) throw SchemaError("'rows' must be an array", line);
    for (const auto& jr : jrows) {
        const auto& parents = jsonl::require_field(jr, "parents", line);
        if (!parents.is_array() || parents.size() != n.parents.size())
            throw SchemaError("cpt row must name a state for each of the " +
                                  std::to_string(n.parents.size()) + " parent(s)",
                              line);
        std::size_t row = 0;
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            const BayesNode& par = net.node(n.parents[i]);
            const int s = par.state_index(parents[i].get<std::string>());
            if (s < 0)
                throw SchemaError("cpt row names unknown state '" +
                                      parents[i].get<std::string>() + "' of parent '" +
                                      n.parents[i] + "'",
                                  line);
            row = row * par.states.size() + static_cast<std::size_t>(s);
        }
        const auto& p = jsonl::require_field(jr, "p", line);
        if (!p.is_array() || p.size() != k)
            throw SchemaError("cpt row 'p' must list " + std::to_string(k) + " probabilities",
                              line);
        if (cpt.table[row * k] >= 0.0)
            throw SchemaError("cpt row given twice for node '" + cpt.node + "'", line);
        for (std::size_t s = 0; s < k; ++s) cpt.table[row * k + s] = p[s].get<double>();
    }
    for (std::size_t i = 0; i < cpt.table.size(); ++i)
        if (cpt.table[i] < 0.0)
            throw SchemaError("cpt for node '" + cpt.node + "' is missing a parent combination",
                              line);
    return cpt;
}

json cpt_to_record(const BayesNet& net, const std::string& node_id) {
    const BayesNode& n = net.node(node_id);
    const Cpt& cpt = net.cpt(node_id);
    const std::size_t k = n.states.size();
    const std::size_t rows = cpt.table.size() / k;
    json jrows = json::array();
    for (std::size_t row = 0; row < rows; ++row) {
        json jr;
        json parents = json::array();
        std::size_t rem = row;
        std::vector<std::string> names(n.parents.size());
        for (std::size_t i = n.parents.size(); i-- > 0;) {
            const BayesNode& par = net.node(n.parents[i]);
            names[i] = par.states[rem % par.states.size()];
            rem /= par.states.size();
        }
        for (const auto& nm : names) parents.push_back(nm);
        jr["parents"] = parents;
        jr["p"] = std::vector<double>(cpt.table.begin() + static_cast<std::ptrdiff_t>(row * k),
                                      cpt.table.begin() + static_cast<std::ptrdiff_t>((row + 1) * k));
        jrows.push_back(std::move(jr));
    }
    json rec;
    rec["kind"] = "cpt";
    rec["node"] = node_id;
    rec["rows"] = std::move(jrows);
    return rec;
}

template <typename T, typename KeyFn>
void find_duplicates(const std::vector<T>& items, KeyFn key, const std::string& what,
                     std::vector<Contradiction>& out) {
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            if (key(items[i]) != key(items[j])) continue;
            if (!(items[i] == items[j])) {
                out.push_back({Contradiction::Kind::DuplicateConcept, key(items[i]),
                               what + " '" + key(items[i]) + "' registered twice with conflicting fields"});
            }
        }
    }
}

}  // namespace

std::vector<Contradiction> check_consistency(const KnowledgeBase& kb) {
    std::vector<Contradiction> out;
    using K = Contradiction::Kind;

    find_duplicates(kb.concepts, [](const Concept& c) { return c.id; }, "concept", out);
    find_duplicates(kb.propositions, [](const Proposition& p) { return p.id; }, "proposition", out);

    std::set<std::string> prop_ids;
    for (const auto& p : kb.propositions) prop_ids.insert(p.id);
    std::set<std::string> concept_ids;
    for (const auto& c : kb.concepts) concept_ids.insert(c.id);

    for (const auto& c : kb.concepts) {
        for (const auto& l : c.labels)
            if (!kb.sigma.count(l))
                out.push_back({K::UnregisteredLabel, c.id,
                               "concept '" + c.id + "' uses label '" + l +
                                   "' absent from the label alphabet"});
        if (c.embedding && c.embedding->size() != kb.config.embedding_dim)
            out.push_back({K::EmbeddingDimMismatch, c.id,
                           "concept '" + c.id + "' embedding has dimension " +
                               std::to_string(c.embedding->size()) + ", KB uses " +
                               std::to_string(kb.config.embedding_dim)});
    }
    for (const auto& p : kb.propositions) {
        if (p.subject_concept && !concept_ids.count(*p.subject_concept))
            out.push_back({K::MissingConcept, p.id,
                           "proposition '" + p.id + "' references missing concept '" +
                               *p.subject_concept + "'"});
    }

    for (const auto& r : kb.rules) {
        std::set<std::string> atoms;
        r.antecedent.collect_atoms(atoms);
        for (const auto& a : atoms)
            if (!prop_ids.count(a))
                out.push_back({K::MissingProposition, a,
                               "rule '" + (r.id.empty() ? render(r) : r.id) +
                                   "' antecedent references missing proposition '" + a + "'"});
        if (!prop_ids.count(r.consequent))
            out.push_back({K::MissingProposition, r.consequent,
                           "rule '" + (r.id.empty() ? render(r) : r.id) +
                               "' concludes missing proposition '" + r.consequent + "'"});
    }

    for (const auto& e : kb.exclusions) {
        for (const auto& side : {e.a, e.b})
            if (!prop_ids.count(side))
                out.push_back({K::BadExclusion, side,
                               "exclusion references missing proposition '" + side + "'"});
    }

    // Negation must stay on evidence-grounded atoms: a negated atom that is
    // also some rule's consequent makes the fixpoint ill-defined.
    std::set<std::string> consequents;
    for (const auto& r : kb.rules) consequents.insert(r.consequent);
    for (const auto& r : kb.rules) {
        std::set<std::string> negated;
        r.antecedent.collect_negated_atoms(negated);
        for (const auto& atom : negated) {
            if (consequents.count(atom))
                out.push_back({K::StratificationViolation, atom,
                               "rule '" + (r.id.empty() ? render(r) : r.id) +
                                   "' negates '" + atom +
                                   "', which is also a rule consequent"});
        }
    }

    // Two rules with the same antecedent asserting declared-exclusive
    // propositions.
    for (std::size_t i = 0; i < kb.rules.size(); ++i) {
        for (std::size_t j = i + 1; j < kb.rules.size(); ++j) {
            if (!(kb.rules[i].antecedent == kb.rules[j].antecedent)) continue;
            const auto& ca = kb.rules[i].consequent;
            const auto& cb = kb.rules[j].consequent;
            for (const auto& e : kb.exclusions) {
                if ((e.a == ca && e.b == cb) || (e.a == cb && e.b == ca)) {
                    out.push_back({K::ExclusiveConsequents, ca + "/" + cb,
                                   "rules '" + kb.rules[i].id + "' and '" + kb.rules[j].id +
                                       "' share antecedent '" + render(kb.rules[i].antecedent) +
                                       "' but assert mutually exclusive '" + ca + "' and '" + cb +
                                       "'"});
                }
            }
        }
    }

    for (const auto& problem : kb.bayes_net.structural_problems()) {
        const bool cycle = problem.find("cycle") != std::string::npos;
        out.push_back({cycle ? K::BayesCycle : K::BadCpt, "", problem});
    }
    for (const auto& id : kb.bayes_net.node_ids()) {
        const BayesNode& n = kb.bayes_net.node(id);
        if (n.present_state && n.state_index(*n.present_state) < 0)
            out.push_back({K::BadCpt, id,
                           "node '" + id + "' designates unknown present state '" +
                               *n.present_state + "'"});
    }

    std::set<std::pair<std::string, std::string>> bridge_pairs;
    for (const auto& b : kb.bridges) {
        if (!prop_ids.count(b.tcm_prop))
            out.push_back({K::MissingBridgeEndpoint, b.tcm_prop,
                           "bridge references missing proposition '" + b.tcm_prop + "'"});
        if (!kb.bayes_net.has_node(b.wm_node))
            out.push_back({K::MissingBridgeEndpoint, b.wm_node,
                           "bridge references missing WM node '" + b.wm_node + "'"});
        if (!bridge_pairs.emplace(b.tcm_prop, b.wm_node).second)
            out.push_back({K::DuplicateBridge, b.tcm_prop + "->" + b.wm_node,
                           "duplicate bridge (" + b.tcm_prop + ", " + b.wm_node + ")"});
    }

    std::set<std::string> class_names;
    for (const auto& vc : kb.verb_classes) class_names.insert(vc.name);
    for (const auto& r : kb.relations) {
        if (!concept_ids.count(r.subject))
            out.push_back({K::BadRelation, r.subject,
                           "relation references missing subject concept '" + r.subject + "'"});
        if (!concept_ids.count(r.object))
            out.push_back({K::BadRelation, r.object,
                           "relation references missing object concept '" + r.object + "'"});
        if (!class_names.count(r.verb_class))
            out.push_back({K::BadRelation, r.verb_class,
                           "relation references unregistered verb class '" + r.verb_class + "'"});
    }

    return out;
}

KnowledgeBase load_kb(const std::string& path) {
    KnowledgeBase kb;
    std::vector<PendingCpt> pending_cpts;
    std::vector<Contradiction> load_findings;
    bool saw_config = false;

    jsonl::for_each_record(path, [&](const json& rec, int line) {
        const std::string kind = jsonl::require_string(rec, "kind", line);
        if (kind == "config") {
            if (saw_config) throw SchemaError("duplicate config record", line);
            saw_config = true;
            if (auto it = rec.find("embedding_dim"); it != rec.end())
                kb.config.embedding_dim = it->get<std::size_t>();
            if (auto it = rec.find("tau_high"); it != rec.end())
                kb.config.tau_high = range01(it->get<double>(), "tau_high", line);
            if (auto it = rec.find("tau_low"); it != rec.end())
                kb.config.tau_low = range01(it->get<double>(), "tau_low", line);
            if (auto it = rec.find("theta"); it != rec.end())
                kb.config.theta = range01(it->get<double>(), "theta", line);
            if (auto it = rec.find("version"); it != rec.end())
                kb.version = it->get<std::int64_t>();
            if (kb.config.tau_low > kb.config.tau_high)
                throw SchemaError("tau_low must not exceed tau_high", line);
        } else if (kind == "label") {
            std::string name = jsonl::require_string(rec, "name", line);
            std::transform(name.begin(), name.end(), name.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            kb.sigma.insert(std::move(name));
        } else if (kind == "concept") {
            kb.concepts.push_back(parse_concept(rec, line));
        } else if (kind == "proposition") {
            kb.propositions.push_back(parse_proposition(rec, line));
        } else if (kind == "rule") {
            kb.rules.push_back(parse_rule_record(rec, line));
        } else if (kind == "exclusion") {
            kb.exclusions.push_back(Exclusion{jsonl::require_string(rec, "a", line),
                                              jsonl::require_string(rec, "b", line)});
        } else if (kind == "bridge") {
            BridgeLink b;
            b.tcm_prop = jsonl::require_string(rec, "tcm_prop", line);
            b.wm_node = jsonl::require_string(rec, "wm_node", line);
            b.strength = range01(jsonl::require_number(rec, "strength", line), "strength", line);
            kb.bridges.push_back(std::move(b));
        } else if (kind == "relation") {
            kb.relations.push_back(Relation{jsonl::require_string(rec, "subject", line),
                                            jsonl::require_string(rec, "verb_class", line),
                                            jsonl::require_string(rec, "object", line)});
        } else if (kind == "verb_class") {
            VerbClass vc;
            vc.name = jsonl::require_string(rec, "name", line);
            vc.system = system_from_string(jsonl::get_string_or(rec, "system", "TCM"), line);
            if (auto it = rec.find("verbs"); it != rec.end() && it->is_array())
                for (const auto& v : *it) vc.verbs.insert(v.get<std::string>());
            kb.verb_classes.push_back(std::move(vc));
        } else if (kind == "bayes_node") {
            try {
                kb.bayes_net.add_node(parse_bayes_node(rec, line));
            } catch (const BayesError& e) {
                throw SchemaError(e.what(), line);
            }
        } else if (kind == "cpt") {
            pending_cpts.push_back({rec, line});
        } else if (kind == "curve") {
            MembershipCurve c = parse_curve(rec, line);
            for (const auto& existing : kb.curves)
                if (existing.observation == c.observation)
                    throw SchemaError("duplicate curve for observation '" + c.observation + "'",
                                      line);
            kb.curves.push_back(std::move(c));
        } else if (kind == "evidence") {
            CaseEvidence ev = parse_evidence(rec, line);
            if (kb.evidences.count(ev.id))
                throw SchemaError("duplicate evidence id '" + ev.id + "'", line);
            kb.evidences[ev.id] = std::move(ev);
        } else {
            throw SchemaError("unknown record kind '" + kind + "'", line);
        }
    });

    for (const auto& pending : pending_cpts) {
        const std::string node = jsonl::require_string(pending.rec, "node", pending.line);
        if (!kb.bayes_net.has_node(node)) {
            load_findings.push_back({Contradiction::Kind::BadCpt, node,
                                     "cpt references unknown node '" + node + "'"});
            continue;
        }
        bool parents_ok = true;
        for (const auto& p : kb.bayes_net.node(node).parents)
            if (!kb.bayes_net.has_node(p)) parents_ok = false;
        if (!parents_ok) continue;  // the missing parent is reported by check_consistency
        try {
            kb.bayes_net.set_cpt(cpt_from_record(pending.rec, pending.line, kb.bayes_net));
        } catch (const BayesError& e) {
            throw SchemaError(e.what(), pending.line);
        }
    }

    auto findings = check_consistency(kb);
    findings.insert(findings.end(), load_findings.begin(), load_findings.end());
    if (!findings.empty()) throw ConsistencyError(std::move(findings));
    return kb;
}

namespace {

json concept_to_record(const Concept& c) {
    json rec;
    rec["kind"] = "concept";
    rec["id"] = c.id;
    if (!c.name_zh.empty()) rec["name_zh"] = c.name_zh;
    if (!c.name_en.empty()) rec["name_en"] = c.name_en;
    rec["system"] = to_string(c.system);
    if (!c.labels.empty()) rec["labels"] = c.labels;
    if (c.embedding) rec["embedding"] = *c.embedding;
    return rec;
}

}  // namespace

std::string kb_to_manifest(const KnowledgeBase& kb) {
    std::vector<json> records;
    {
        json rec;
        rec["kind"] = "config";
        rec["embedding_dim"] = kb.config.embedding_dim;
        rec["tau_high"] = kb.config.tau_high;
        rec["tau_low"] = kb.config.tau_low;
        rec["theta"] = kb.config.theta;
        rec["version"] = kb.version;
        records.push_back(std::move(rec));
    }
    for (const auto& l : kb.sigma) records.push_back({{"kind", "label"}, {"name", l}});

    std::vector<Concept> concepts = kb.concepts;
    std::sort(concepts.begin(), concepts.end(),
              [](const Concept& a, const Concept& b) { return a.id < b.id; });
    concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
    for (const auto& c : concepts) records.push_back(concept_to_record(c));

    std::vector<Proposition> props = kb.propositions;
    std::sort(props.begin(), props.end(),
              [](const Proposition& a, const Proposition& b) { return a.id < b.id; });
    props.erase(std::unique(props.begin(), props.end()), props.end());
    for (const auto& p : props) {
        json rec;
        rec["kind"] = "proposition";
        rec["id"] = p.id;
        if (!p.statement.empty()) rec["statement"] = p.statement;
        if (p.subject_concept) rec["subject_concept"] = *p.subject_concept;
        rec["system"] = to_string(p.system);
        records.push_back(std::move(rec));
    }

    std::vector<Rule> rules = kb.rules;
    std::sort(rules.begin(), rules.end(),
              [](const Rule& a, const Rule& b) { return a.id < b.id; });
    for (const auto& r : rules) {
        json rec;
        rec["kind"] = "rule";
        rec["id"] = r.id;
        rec["text"] = render(r);
        if (!r.source.empty()) rec["source"] = r.source;
        records.push_back(std::move(rec));
    }

    std::vector<Exclusion> exclusions = kb.exclusions;
    for (auto& e : exclusions)
        if (e.b < e.a) std::swap(e.a, e.b);
    std::sort(exclusions.begin(), exclusions.end(),
              [](const Exclusion& x, const Exclusion& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    for (const auto& e : exclusions)
        records.push_back({{"kind", "exclusion"}, {"a", e.a}, {"b", e.b}});

    std::vector<BridgeLink> bridges = kb.bridges;
    std::sort(bridges.begin(), bridges.end(), [](const BridgeLink& x, const BridgeLink& y) {
        return std::tie(x.tcm_prop, x.wm_node) < std::tie(y.tcm_prop, y.wm_node);
    });
    for (const auto& b : bridges)
        records.push_back({{"kind", "bridge"},
                           {"tcm_prop", b.tcm_prop},
                           {"wm_node", b.wm_node},
                           {"strength", b.strength}});

    std::vector<Relation> relations = kb.relations;
    std::sort(relations.begin(), relations.end());
    for (const auto& r : relations)
        records.push_back({{"kind", "relation"},
                           {"subject", r.subject},
                           {"verb_class", r.verb_class},
                           {"object", r.object}});

    std::vector<VerbClass> classes = kb.verb_classes;
    std::sort(classes.begin(), classes.end(),
              [](const VerbClass& a, const VerbClass& b) { return a.name < b.name; });
    for (const auto& vc : classes) {
        json rec;
        rec["kind"] = "verb_class";
        rec["name"] = vc.name;
        rec["system"] = to_string(vc.system);
        rec["verbs"] = vc.verbs;
        records.push_back(std::move(rec));
    }

    std::vector<std::string> node_ids = kb.bayes_net.node_ids();
    std::sort(node_ids.begin(), node_ids.end());
    for (const auto& id : node_ids) {
        const BayesNode& n = kb.bayes_net.node(id);
        json rec;
        rec["kind"] = "bayes_node";
        rec["id"] = n.id;
        rec["states"] = n.states;
        if (!n.parents.empty()) rec["parents"] = n.parents;
        rec["role"] = n.role == NodeRole::TCM ? "TCM" : (n.role == NodeRole::WM ? "WM" : "Bridge");
        if (n.present_state) rec["present_state"] = *n.present_state;
        records.push_back(std::move(rec));
    }
    for (const auto& id : node_ids) {
        try {
            records.push_back(cpt_to_record(kb.bayes_net, id));
        } catch (const BayesError&) {
            // node without CPT: representable in memory, reported by
            // check_consistency, skipped on save
        }
    }

    std::vector<MembershipCurve> curves = kb.curves;
    std::sort(curves.begin(), curves.end(), [](const MembershipCurve& a, const MembershipCurve& b) {
        return a.observation < b.observation;
    });
    for (const auto& c : curves) {
        json rec;
        rec["kind"] = "curve";
        rec["observation"] = c.observation;
        json points = json::array();
        for (const auto& [x, mu] : c.breakpoints) points.push_back({x, mu});
        rec["points"] = std::move(points);
        records.push_back(std::move(rec));
    }

    for (const auto& [id, ev] : kb.evidences) {
        json rec;
        rec["kind"] = "evidence";
        rec["id"] = id;
        if (!ev.fuzzy.base_degrees.empty()) rec["base_degrees"] = ev.fuzzy.base_degrees;
        if (!ev.fuzzy.raw_observations.empty()) rec["observations"] = ev.fuzzy.raw_observations;
        if (!ev.wm_observations.empty()) rec["wm_observations"] = ev.wm_observations;
        records.push_back(std::move(rec));
    }

    std::string out;
    for (const auto& rec : records) {
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write KB manifest: " + path);
    out << kb_to_manifest(kb);
    if (!out) throw IoError("write failed: " + path);
}

KnowledgeBase extend_kb(const KnowledgeBase& kb, const KbAdditions& additions) {
    KnowledgeBase next = kb;
    std::vector<Contradiction> merge_findings;

    for (const auto& l : additions.labels) {
        std::string name = l;
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char ch) { return std::tolower(ch); });
        next.sigma.insert(std::move(name));
    }
    next.concepts.insert(next.concepts.end(), additions.concepts.begin(),
                         additions.concepts.end());
    next.propositions.insert(next.propositions.end(), additions.propositions.begin(),
                             additions.propositions.end());
    next.rules.insert(next.rules.end(), additions.rules.begin(), additions.rules.end());
    next.exclusions.insert(next.exclusions.end(), additions.exclusions.begin(),
                           additions.exclusions.end());
    next.bridges.insert(next.bridges.end(), additions.bridges.begin(), additions.bridges.end());
    next.relations.insert(next.relations.end(), additions.relations.begin(),
                          additions.relations.end());
    for (const auto& n : additions.bayes_nodes) {
        try {
            next.bayes_net.add_node(n);
        } catch (const BayesError& e) {
            merge_findings.push_back({Contradiction::Kind::DuplicateConcept, n.id, e.what()});
        }
    }
    for (const auto& cpt : additions.cpts) {
        try {
            next.bayes_net.set_cpt(cpt);
        } catch (const BayesError& e) {
            merge_findings.push_back({Contradiction::Kind::BadCpt, cpt.node, e.what()});
        }
    }

    auto findings = check_consistency(next);
    findings.insert(findings.end(), merge_findings.begin(), merge_findings.end());
    if (!findings.empty()) throw ConsistencyError(std::move(findings));
    ++next.version;
    return next;
}

KbAdditions load_additions(const std::string& path, const KnowledgeBase* base) {
    KbAdditions add;
    std::vector<std::pair<json, int>> pending_cpts;
    // Node declarations needed to lay out added CPTs: the base net (if any)
    // plus nodes declared in this additions file.
    BayesNet staging;
    if (base) staging = base->bayes_net;

    jsonl::for_each_record(path, [&](const json& rec, int line) {
        const std::string kind = jsonl::require_string(rec, "kind", line);
        if (kind == "label") {
            add.labels.push_back(jsonl::require_string(rec, "name", line));
        } else if (kind == "concept") {
            add.concepts.push_back(parse_concept(rec, line));
        } else if (kind == "proposition") {
            add.propositions.push_back(parse_proposition(rec, line));
        } else if (kind == "rule") {
            add.rules.push_back(parse_rule_record(rec, line));
        } else if (kind == "exclusion") {
            add.exclusions.push_back(Exclusion{jsonl::require_string(rec, "a", line),
                                               jsonl::require_string(rec, "b", line)});
        } else if (kind == "bridge") {
            BridgeLink b;
            b.tcm_prop = jsonl::require_string(rec, "tcm_prop", line);
            b.wm_node = jsonl::require_string(rec, "wm_node", line);
            b.strength = range01(jsonl::require_number(rec, "strength", line), "strength", line);
            add.bridges.push_back(std::move(b));
        } else if (kind == "relation") {
            add.relations.push_back(Relation{jsonl::require_string(rec, "subject", line),
                                             jsonl::require_string(rec, "verb_class", line),
                                             jsonl::require_string(rec, "object", line)});
        } else if (kind == "bayes_node") {
            add.bayes_nodes.push_back(parse_bayes_node(rec, line));
        } else if (kind == "cpt") {
            pending_cpts.emplace_back(rec, line);
        } else {
            throw SchemaError("record kind '" + kind + "' is not extendable", line);
        }
    });

    for (const auto& n : add.bayes_nodes) {
        try {
            staging.add_node(n);
        } catch (const BayesError&) {
            // re-declared node: extend_kb reports the real finding
        }
    }
    for (const auto& [rec, line] : pending_cpts) {
        const std::string node = jsonl::require_string(rec, "node", line);
        bool layout_known = staging.has_node(node);
        if (layout_known)
            for (const auto& p : staging.node(node).parents)
                if (!staging.has_node(p)) layout_known = false;
        if (!layout_known)
            throw SchemaError("cpt for '" + node +
                                  "' references nodes not declared here or in the base KB",
                              line);
        add.cpts.push_back(cpt_from_record(rec, line, staging));
    }
    return add;
}

CaseEvidence load_evidence(const std::string& path, const std::string& case_id) {
    std::vector<CaseEvidence> found;
    jsonl::for_each_record(path, [&](const json& rec, int line) {
        if (jsonl::get_string_or(rec, "kind", "evidence") != "evidence") return;
        found.push_back(parse_evidence(rec, line));
    });
    if (found.empty()) throw SchemaError("no evidence record in " + path);
    if (case_id.empty()) {
        if (found.size() > 1)
            throw SchemaError("multiple evidence records in " + path + "; name one by id");
        return found.front();
    }
    for (auto& ev : found)
        if (ev.id == case_id) return ev;
    throw SchemaError("no evidence record with id '" + case_id + "' in " + path);
}

}  // namespace medbridge
