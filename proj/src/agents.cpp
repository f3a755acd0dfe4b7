#include "medbridge/agents.hpp"

#include <algorithm>
#include <sstream>

#include <httplib.h>

#include "medbridge/embed.hpp"
#include "medbridge/fuzzy.hpp"

namespace medbridge {

using nlohmann::json;

std::string to_string(AgentRole role) {
    switch (role) {
        case AgentRole::KnowledgeExtraction: return "KnowledgeExtraction";
        case AgentRole::TcmReasoning: return "TcmReasoning";
        case AgentRole::WmSpecialist: return "WmSpecialist";
        case AgentRole::Evaluation: return "Evaluation";
        case AgentRole::Coordinator: return "Coordinator";
    }
    return "Coordinator";
}

AgentRole agent_role_from_string(const std::string& s) {
    if (s == "KnowledgeExtraction") return AgentRole::KnowledgeExtraction;
    if (s == "TcmReasoning") return AgentRole::TcmReasoning;
    if (s == "WmSpecialist") return AgentRole::WmSpecialist;
    if (s == "Evaluation") return AgentRole::Evaluation;
    if (s == "Coordinator") return AgentRole::Coordinator;
    throw AgentError("unknown agent role '" + s + "'");
}

namespace {

const char* expected_payload_kind(AgentRole role) {
    switch (role) {
        case AgentRole::KnowledgeExtraction: return "extraction";
        case AgentRole::TcmReasoning: return "degree_assignment";
        case AgentRole::WmSpecialist: return "posteriors";
        case AgentRole::Evaluation: return "metrics";
        case AgentRole::Coordinator: return "verdict";
    }
    return "verdict";
}

json step_to_json(const CoTStep& step, const std::string& case_id) {
    json j;
    j["case"] = case_id;
    j["ts"] = step.timestamp;
    j["role"] = to_string(step.agent);
    j["rationale"] = step.rationale;
    j["payload"] = step.payload;
    return j;
}

}  // namespace

json CoTTrace::to_json() const {
    json arr = json::array();
    for (const auto& s : steps) arr.push_back(step_to_json(s, case_id));
    return arr;
}

CoTTrace CoTTrace::from_json(const json& j) {
    CoTTrace t;
    for (const auto& rec : j) {
        CoTStep step;
        step.agent = agent_role_from_string(rec.at("role").get<std::string>());
        step.rationale = rec.at("rationale").get<std::string>();
        step.payload = rec.at("payload");
        step.timestamp = rec.at("ts").get<std::int64_t>();
        if (t.case_id.empty()) t.case_id = rec.value("case", "");
        t.steps.push_back(std::move(step));
    }
    return t;
}

std::vector<std::string> validate_trace(const CoTTrace& trace) {
    std::vector<std::string> problems;
    if (trace.steps.empty()) {
        problems.push_back("trace has no steps");
        return problems;
    }
    std::int64_t last_ts = -1;
    for (const auto& step : trace.steps) {
        if (step.rationale.empty())
            problems.push_back(to_string(step.agent) + " step has an empty rationale");
        if (step.timestamp <= last_ts)
            problems.push_back("timestamps are not strictly increasing at ts=" +
                               std::to_string(step.timestamp));
        last_ts = step.timestamp;
        const std::string kind = step.payload.is_object() && step.payload.contains("kind")
                                     ? step.payload["kind"].get<std::string>()
                                     : "";
        if (kind != expected_payload_kind(step.agent))
            problems.push_back(to_string(step.agent) + " step carries payload kind '" + kind +
                               "', expected '" + expected_payload_kind(step.agent) + "'");
    }
    if (trace.steps.back().agent != AgentRole::Coordinator)
        problems.push_back("final step must be authored by the Coordinator");
    return problems;
}

json BridgingResult::to_json() const {
    json j;
    j["case"] = case_id;
    j["tcm_findings"] = tcm_findings;
    json wm = json::object();
    for (const auto& [node, vec] : wm_findings) wm[node] = vec;
    j["wm_findings"] = wm;
    json conv = json::array();
    for (const auto& c : convergences)
        conv.push_back({{"tcm_prop", c.tcm_prop}, {"wm_node", c.wm_node}, {"note", c.note}});
    j["convergences"] = conv;
    json disc = json::array();
    for (const auto& d : discrepancies)
        disc.push_back({{"tcm_prop", d.tcm_prop}, {"reason", d.reason}});
    j["discrepancies"] = disc;
    j["verdict"] = verdict;
    j["trace"] = trace.to_json();
    return j;
}

json build_agent_request(AgentRole role, const std::string& case_id, const std::string& prompt,
                         const json& context, const std::string& model) {
    json req;
    req["role"] = to_string(role);
    req["case_id"] = case_id;
    req["prompt"] = prompt;
    req["context"] = context;
    req["model"] = model;
    return req;
}

BackendReply parse_agent_reply(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw AgentError("remote reply is not a JSON object");
    if (!j.contains("rationale") || !j["rationale"].is_string())
        throw AgentError("remote reply lacks a string 'rationale'");
    if (!j.contains("payload"))
        throw AgentError("remote reply lacks a 'payload'");
    BackendReply reply;
    reply.rationale = j["rationale"].get<std::string>();
    reply.payload = j["payload"];
    return reply;
}

namespace {

class DeterministicBackend final : public AgentBackend {
  public:
    bool is_remote() const override { return false; }
    BackendReply call(AgentRole, const std::string&, const std::string&,
                      const nlohmann::json&) override {
        throw AgentError("deterministic backend must never be consulted over the wire");
    }
};

class RemoteBackend final : public AgentBackend {
  public:
    explicit RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty()) throw AgentError("remote backend needs an endpoint");
    }

    bool is_remote() const override { return true; }

    BackendReply call(AgentRole role, const std::string& case_id, const std::string& prompt,
                      const nlohmann::json& context) override {
        httplib::Client client(config_.endpoint);
        client.set_connection_timeout(0, config_.timeout_ms * 1000);
        client.set_read_timeout(0, config_.timeout_ms * 1000);
        httplib::Headers headers;
        if (const char* token = std::getenv("MEDBRIDGE_REMOTE_TOKEN"))
            headers.emplace("Authorization", std::string("Bearer ") + token);
        const json req = build_agent_request(role, case_id, prompt, context, config_.model);
        auto res = client.Post("/v1/agent", headers, req.dump(), "application/json");
        if (!res)
            throw AgentError("remote backend unreachable or timed out: " + config_.endpoint);
        if (res->status != 200)
            throw AgentError("remote backend returned HTTP " + std::to_string(res->status));
        return parse_agent_reply(res->body);
    }

  private:
    RemoteConfig config_;
};

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ", ";
        out += id;
    }
    return out.empty() ? "none" : out;
}

}  // namespace

std::unique_ptr<AgentBackend> make_deterministic_backend() {
    return std::make_unique<DeterministicBackend>();
}

std::unique_ptr<AgentBackend> make_remote_backend(const RemoteConfig& config) {
    return std::make_unique<RemoteBackend>(config);
}

PipelineOptions pipeline_options_from(const KbConfig& config) {
    PipelineOptions opts;
    opts.tau_high = config.tau_high;
    opts.tau_low = config.tau_low;
    return opts;
}

std::pair<std::vector<Convergence>, std::vector<Discrepancy>> coordinator_merge(
    const std::map<std::string, double>& tcm_findings,
    const std::map<std::string, std::vector<double>>& wm_findings,
    const std::vector<BridgeLink>& bridges,
    const std::map<std::string, std::size_t>& present_state_index, double tau_high,
    double tau_low) {
    std::vector<Convergence> convergences;
    std::vector<Discrepancy> discrepancies;
    for (const auto& [prop, degree] : tcm_findings) {
        if (degree < tau_high) continue;
        bool has_bridge = false;
        bool supported = false;
        for (const auto& b : bridges) {
            if (b.tcm_prop != prop) continue;
            has_bridge = true;
            auto post = wm_findings.find(b.wm_node);
            if (post == wm_findings.end()) continue;  // no posterior: counts as weak support
            auto present = present_state_index.find(b.wm_node);
            if (present == present_state_index.end() || present->second >= post->second.size())
                continue;
            const double mass = post->second[present->second];
            if (mass >= tau_low) {
                supported = true;
                std::ostringstream note;
                note << "posterior present-mass " << mass << " >= tau_low " << tau_low;
                convergences.push_back({prop, b.wm_node, note.str()});
            }
        }
        if (!has_bridge) {
            discrepancies.push_back({prop, "no_bridge"});
        } else if (!supported) {
            discrepancies.push_back({prop, "weak_wm_support"});
        }
    }
    return {std::move(convergences), std::move(discrepancies)};
}

namespace {

std::map<std::string, std::size_t> present_indices(const KnowledgeBase& kb) {
    std::map<std::string, std::size_t> out;
    for (const auto& id : kb.bayes_net.node_ids()) {
        const BayesNode& n = kb.bayes_net.node(id);
        if (n.present_state) {
            const int idx = n.state_index(*n.present_state);
            if (idx >= 0) out[id] = static_cast<std::size_t>(idx);
        }
    }
    return out;
}

CoTStep make_step(AgentRole role, std::string rationale, json payload, std::int64_t ts) {
    CoTStep step;
    step.agent = role;
    step.rationale = std::move(rationale);
    step.payload = std::move(payload);
    step.timestamp = ts;
    return step;
}

}  // namespace

BridgingResult run_case(const KnowledgeBase& kb, const CaseEvidence& evidence,
                        AgentBackend& backend, const PipelineOptions& opts) {
    BridgingResult result;
    result.case_id = evidence.id;
    result.trace.case_id = evidence.id;
    std::int64_t ts = 0;

    // The engines always compute the payloads; a remote backend only
    // narrates them. Its failure aborts the case with the trace so far.
    auto narrate = [&](AgentRole role, const std::string& fallback,
                       const json& payload) -> std::string {
        if (!backend.is_remote()) return fallback;
        try {
            const BackendReply reply = backend.call(
                role, evidence.id, "Narrate this reasoning step for the case log.", payload);
            return reply.rationale.empty() ? fallback : reply.rationale;
        } catch (const BackendError&) {
            throw;
        } catch (const AgentError& e) {
            throw BackendError(e.what(), result.trace);
        }
    };

    // Knowledge extraction: evidence ingestion, curve application.
    EvidenceSet grounded = apply_curves(kb.curves, evidence.fuzzy);
    if (opts.enable_knowledge_extraction) {
        json payload;
        payload["kind"] = "extraction";
        payload["base_degrees"] = grounded.base_degrees;
        payload["wm_observations"] = evidence.wm_observations;
        std::ostringstream rationale;
        rationale << "Ingested " << evidence.fuzzy.raw_observations.size()
                  << " raw observation(s) through " << kb.curves.size()
                  << " membership curve(s); " << grounded.base_degrees.size()
                  << " grounded proposition degree(s), " << evidence.wm_observations.size()
                  << " observed WM node state(s).";
        result.trace.steps.push_back(make_step(
            AgentRole::KnowledgeExtraction,
            narrate(AgentRole::KnowledgeExtraction, rationale.str(), payload), payload, ts++));
    }

    // TCM reasoning: weighted forward chaining to the least fixpoint.
    if (opts.enable_tcm_reasoning) {
        ChainResult chained = forward_chain(kb, grounded);
        const DegreeAssignment degrees = std::move(chained.assignment);
        for (const auto& [prop, degree] : degrees.degrees) {
            if (degree > 0.0) result.tcm_findings[prop] = degree;
        }
        std::vector<std::string> fired;
        for (const auto& [prop, why] : degrees.derivation)
            if (why != "evidence") fired.push_back(why + " -> " + prop);
        std::sort(fired.begin(), fired.end());
        fired.erase(std::unique(fired.begin(), fired.end()), fired.end());
        json payload;
        payload["kind"] = "degree_assignment";
        payload["degrees"] = result.tcm_findings;
        payload["derivation"] = degrees.derivation;
        payload["rounds"] = chained.rounds;
        std::ostringstream rationale;
        if (result.tcm_findings.empty()) {
            rationale << "No findings: no proposition reached a positive degree.";
        } else {
            rationale << "Forward chaining reached a fixpoint in " << chained.rounds
                      << " round(s); fired: " << join_ids(fired) << ".";
        }
        result.trace.steps.push_back(
            make_step(AgentRole::TcmReasoning,
                      narrate(AgentRole::TcmReasoning, rationale.str(), payload), payload, ts++));
    }

    // WM specialist: posterior queries on bridged nodes for strong findings.
    if (opts.enable_wm_specialist) {
        std::vector<std::string> queried;
        for (const auto& [prop, degree] : result.tcm_findings) {
            if (degree < opts.tau_high) continue;
            for (const auto& b : kb.bridges) {
                if (b.tcm_prop != prop) continue;
                if (result.wm_findings.count(b.wm_node)) continue;
                if (!kb.bayes_net.has_node(b.wm_node)) continue;
                const BayesNode& node = kb.bayes_net.node(b.wm_node);
                Assignment ev = evidence.wm_observations;
                if (ev.count(b.wm_node)) {
                    // Observed outright: the posterior is an indicator.
                    std::vector<double> vec(node.states.size(), 0.0);
                    const int s = node.state_index(ev.at(b.wm_node));
                    if (s >= 0) vec[static_cast<std::size_t>(s)] = 1.0;
                    result.wm_findings[b.wm_node] = std::move(vec);
                } else {
                    result.wm_findings[b.wm_node] = posterior(kb.bayes_net, b.wm_node, ev);
                }
                queried.push_back(b.wm_node);
            }
        }
        json payload;
        payload["kind"] = "posteriors";
        json posteriors = json::object();
        for (const auto& [node, vec] : result.wm_findings) {
            posteriors[node] = {{"states", kb.bayes_net.node(node).states}, {"p", vec}};
        }
        payload["posteriors"] = posteriors;
        std::ostringstream rationale;
        if (queried.empty()) {
            rationale << "No findings: no strong TCM finding carries a bridge link.";
        } else {
            std::sort(queried.begin(), queried.end());
            rationale << "Queried posterior(s) for bridged node(s): " << join_ids(queried)
                      << " given " << evidence.wm_observations.size()
                      << " observed WM state(s).";
        }
        result.trace.steps.push_back(
            make_step(AgentRole::WmSpecialist,
                      narrate(AgentRole::WmSpecialist, rationale.str(), payload), payload, ts++));
    }

    // Coordinator: merge into convergences and discrepancies.
    auto [convergences, discrepancies] =
        coordinator_merge(result.tcm_findings, result.wm_findings, kb.bridges,
                          present_indices(kb), opts.tau_high, opts.tau_low);
    result.convergences = std::move(convergences);
    result.discrepancies = std::move(discrepancies);
    {
        std::ostringstream verdict;
        verdict << result.convergences.size() << " convergence(s), "
                << result.discrepancies.size() << " discrepancy(ies)";
        result.verdict = verdict.str();
        json payload;
        payload["kind"] = "verdict";
        json conv = json::array();
        for (const auto& c : result.convergences)
            conv.push_back({{"tcm_prop", c.tcm_prop}, {"wm_node", c.wm_node}, {"note", c.note}});
        json disc = json::array();
        for (const auto& d : result.discrepancies)
            disc.push_back({{"tcm_prop", d.tcm_prop}, {"reason", d.reason}});
        payload["convergences"] = conv;
        payload["discrepancies"] = disc;
        payload["verdict"] = result.verdict;
        std::ostringstream rationale;
        if (result.convergences.empty() && result.discrepancies.empty()) {
            rationale << "No findings crossed tau_high=" << opts.tau_high << "; nothing to merge.";
        } else {
            rationale << "Merged TCM findings against WM posteriors with tau_high="
                      << opts.tau_high << ", tau_low=" << opts.tau_low << ".";
        }
        result.trace.steps.push_back(
            make_step(AgentRole::Coordinator,
                      narrate(AgentRole::Coordinator, rationale.str(), payload), payload, ts++));
    }
    return result;
}

JudgeOutcome judge_alignment(const KnowledgeBase& kb, const SVOSentence& sentence,
                             AgentBackend& backend, const JudgeOptions& opts) {
    JudgeOutcome outcome;
    outcome.trace.case_id = sentence.id;
    std::int64_t ts = 0;

    if (backend.is_remote()) {
        json context;
        context["sentence"] = {{"id", sentence.id},       {"text_zh", sentence.text_zh},
                               {"text_en", sentence.text_en}, {"subject", sentence.subject},
                               {"verb", sentence.verb},   {"object", sentence.object},
                               {"system", to_string(sentence.system)}};
        BackendReply reply;
        try {
            reply = backend.call(sentence.system == SvoSystem::TCM ? AgentRole::TcmReasoning
                                                                   : AgentRole::WmSpecialist,
                                 sentence.id, perceptual_prompt(sentence), context);
        } catch (const AgentError& e) {
            throw BackendError(e.what(), outcome.trace);
        }
        if (!reply.payload.is_object() || !reply.payload.contains("verdict") ||
            !reply.payload["verdict"].is_string())
            throw BackendError("remote reply payload lacks a string 'verdict'", outcome.trace);
        const std::string v = reply.payload["verdict"].get<std::string>();
        if (v == "yes" || v == "aligned") {
            outcome.verdict = Verdict::Aligned;
        } else if (v == "no" || v == "misaligned") {
            outcome.verdict = Verdict::Misaligned;
        } else {
            throw BackendError("remote verdict must be yes|no, got '" + v + "'", outcome.trace);
        }
        outcome.branch = "remote";
        if (reply.payload.contains("rated") && reply.payload["rated"].is_object()) {
            const auto& r = reply.payload["rated"];
            RatedDimensions dims;
            dims.familiarity = r.value("familiarity", 0.0);
            dims.emotional_valence = r.value("emotional_valence", 0.0);
            dims.emotional_arousal = r.value("emotional_arousal", 0.0);
            dims.semantic_accuracy = r.value("semantic_accuracy", 0.0);
            outcome.rated = dims;
        }
        json payload;
        payload["kind"] = "verdict";
        payload["verdict"] = to_string(outcome.verdict);
        payload["branch"] = outcome.branch;
        outcome.trace.steps.push_back(make_step(
            AgentRole::Coordinator,
            reply.rationale.empty() ? "Remote verdict accepted." : reply.rationale, payload, ts));
        return outcome;
    }

    // Deterministic decision procedure over the KB.
    const Concept* subject = kb.resolve_concept(sentence.subject);
    const Concept* object = kb.resolve_concept(sentence.object);
    const VerbClass* verb = kb.resolve_verb(sentence.verb);
    {
        json payload;
        payload["kind"] = "extraction";
        payload["subject_concept"] = subject ? subject->id : "";
        payload["object_concept"] = object ? object->id : "";
        payload["verb_class"] = verb ? verb->name : "";
        std::ostringstream rationale;
        rationale << "Resolved SVO: subject '" << sentence.subject << "' -> "
                  << (subject ? subject->id : "(unknown)") << ", verb '" << sentence.verb
                  << "' -> " << (verb ? verb->name : "(unknown)") << ", object '"
                  << sentence.object << "' -> " << (object ? object->id : "(unknown)") << ".";
        outcome.trace.steps.push_back(
            make_step(AgentRole::KnowledgeExtraction, rationale.str(), payload, ts++));
    }

    std::string branch;
    Verdict verdict = Verdict::Misaligned;
    std::string reason;
    if (!subject || !object) {
        if (!opts.fallback_enabled) {
            const std::string missing = !subject ? sentence.subject : sentence.object;
            throw AgentError("unknown concept '" + missing + "' and similarity fallback disabled");
        }
        branch = "unknown_concept";
        reason = std::string("concept '") + (!subject ? sentence.subject : sentence.object) +
                 "' is not in the KB";
    } else if (verb && kb.has_relation(subject->id, verb->name, object->id)) {
        branch = "relation";
        verdict = Verdict::Aligned;
        reason = "explicit relation (" + subject->id + ", " + verb->name + ", " + object->id + ")";
    } else if (!verb) {
        branch = "unknown_verb";
        reason = "verb '" + sentence.verb + "' maps to no registered class";
    } else if (opts.fallback_enabled) {
        const System subject_system = subject->system;
        const bool verb_ok = verb->system == subject_system;
        if (subject->embedding && object->embedding && verb_ok) {
            const double sim = cosine_similarity(*subject->embedding, *object->embedding);
            if (sim >= opts.theta) {
                branch = "similarity";
                verdict = Verdict::Aligned;
                std::ostringstream os;
                os << "cosine(subject, object) = " << sim << " >= theta = " << opts.theta
                   << " and verb class '" << verb->name << "' is registered for "
                   << to_string(subject_system);
                reason = os.str();
            } else {
                branch = "no_license";
                std::ostringstream os;
                os << "cosine(subject, object) = " << sim << " < theta = " << opts.theta;
                reason = os.str();
            }
        } else {
            branch = "no_license";
            reason = verb_ok ? "missing embedding on subject or object"
                             : "verb class '" + verb->name + "' is not registered for " +
                                   to_string(subject_system);
        }
    } else {
        branch = "no_license";
        reason = "no explicit relation and similarity fallback disabled";
    }

    // Domain expert step in the sentence's own system.
    {
        json payload;
        const bool tcm = sentence.system == SvoSystem::TCM;
        if (tcm) {
            payload["kind"] = "degree_assignment";
            payload["degrees"] = json::object();
        } else {
            payload["kind"] = "posteriors";
            payload["posteriors"] = json::object();
        }
        payload["license_branch"] = branch;
        outcome.trace.steps.push_back(make_step(
            tcm ? AgentRole::TcmReasoning : AgentRole::WmSpecialist,
            "License check (" + branch + "): " + reason + ".", payload, ts++));
    }

    outcome.verdict = verdict;
    outcome.branch = branch;
    {
        json payload;
        payload["kind"] = "verdict";
        payload["verdict"] = to_string(verdict);
        payload["branch"] = branch;
        outcome.trace.steps.push_back(make_step(
            AgentRole::Coordinator,
            "Verdict " + to_string(verdict) + " via branch '" + branch + "'.", payload, ts++));
    }
    return outcome;
}

BridgingResult replay_trace(const CoTTrace& trace) {
    BridgingResult result;
    result.case_id = trace.case_id;
    result.trace = trace;
    for (const auto& step : trace.steps) {
        const std::string kind =
            step.payload.is_object() ? step.payload.value("kind", "") : "";
        if (kind == "degree_assignment") {
            for (auto it = step.payload.at("degrees").begin();
                 it != step.payload.at("degrees").end(); ++it)
                result.tcm_findings[it.key()] = it.value().get<double>();
        } else if (kind == "posteriors") {
            const auto& posteriors = step.payload.at("posteriors");
            for (auto it = posteriors.begin(); it != posteriors.end(); ++it)
                result.wm_findings[it.key()] = it.value().at("p").get<std::vector<double>>();
        } else if (kind == "verdict") {
            for (const auto& c : step.payload.at("convergences"))
                result.convergences.push_back({c.at("tcm_prop").get<std::string>(),
                                               c.at("wm_node").get<std::string>(),
                                               c.at("note").get<std::string>()});
            for (const auto& d : step.payload.at("discrepancies"))
                result.discrepancies.push_back({d.at("tcm_prop").get<std::string>(),
                                                d.at("reason").get<std::string>()});
            result.verdict = step.payload.at("verdict").get<std::string>();
        }
    }
    return result;
}

std::string perceptual_prompt(const SVOSentence& sentence) {
    std::ostringstream os;
    os << "You are a medical terminology judge for "
       << (sentence.system == SvoSystem::TCM ? "Traditional Chinese Medicine"
                                             : "Western Medicine")
       << " statements.\n"
       << "Statement (zh): " << sentence.text_zh << "\n"
       << "Statement (en): " << sentence.text_en << "\n"
       << "Subject: " << sentence.subject << "  Verb: " << sentence.verb
       << "  Object: " << sentence.object << "\n"
       << "First rate the statement on four 0-10 scales: Familiarity, Emotional Valence, "
          "Emotional Arousal, Semantic Accuracy.\n"
       << "Then answer with exactly one word, yes or no: does the statement align with "
       << (sentence.system == SvoSystem::TCM ? "TCM theory" : "WM physiology") << "?\n"
       << "Reply as JSON: {\"rationale\": \"...\", \"payload\": {\"verdict\": \"yes|no\", "
          "\"rated\": {\"familiarity\": 0, \"emotional_valence\": 0, \"emotional_arousal\": 0, "
          "\"semantic_accuracy\": 0}}}";
    return os.str();
}

}  // namespace medbridge
