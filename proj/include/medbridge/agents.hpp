#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medbridge/dataset.hpp"
#include "medbridge/kb.hpp"
#include "medbridge/metrics.hpp"

namespace medbridge {

enum class AgentRole { KnowledgeExtraction, TcmReasoning, WmSpecialist, Evaluation, Coordinator };

std::string to_string(AgentRole role);
AgentRole agent_role_from_string(const std::string& s);

struct CoTStep {
    AgentRole agent;
    std::string rationale;       // non-empty
    nlohmann::json payload;      // shape keyed by a "kind" discriminator per role
    std::int64_t timestamp = 0;  // monotone counter within a trace, not wall clock
};

struct CoTTrace {
    std::string case_id;
    std::vector<CoTStep> steps;

    nlohmann::json to_json() const;
    static CoTTrace from_json(const nlohmann::json& j);
};

// Empty when well-formed: monotone timestamps, role/payload kinds matching,
// final step by the Coordinator.
std::vector<std::string> validate_trace(const CoTTrace& trace);

struct Convergence {
    std::string tcm_prop;
    std::string wm_node;
    std::string note;
};

struct Discrepancy {
    std::string tcm_prop;
    std::string reason;  // "no_bridge" | "weak_wm_support"
};

struct BridgingResult {
    std::string case_id;
    std::map<std::string, double> tcm_findings;                // proposition -> degree
    std::map<std::string, std::vector<double>> wm_findings;    // node -> posterior vector
    std::vector<Convergence> convergences;
    std::vector<Discrepancy> discrepancies;
    std::string verdict;  // "aligned"/"misaligned" for benchmark judging, else a report
    CoTTrace trace;

    nlohmann::json to_json() const;
};

struct AgentError : std::runtime_error {
    explicit AgentError(const std::string& msg) : std::runtime_error(msg) {}
};

// Remote failures carry whatever trace existed when the backend died so the
// partial reasoning can be inspected.
struct BackendError : AgentError {
    BackendError(const std::string& msg, CoTTrace partial)
        : AgentError(msg), partial_trace(std::move(partial)) {}
    CoTTrace partial_trace;
};

struct RemoteConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8901
    std::string model;
    int timeout_ms = 10000;
};

struct BackendReply {
    std::string rationale;
    nlohmann::json payload;
};

// Wire-format marshalling, exposed so the protocol is testable without a
// live server.
nlohmann::json build_agent_request(AgentRole role, const std::string& case_id,
                                   const std::string& prompt, const nlohmann::json& context,
                                   const std::string& model);
BackendReply parse_agent_reply(const std::string& body);

class AgentBackend {
  public:
    virtual ~AgentBackend() = default;
    virtual bool is_remote() const = 0;
    // Deterministic backends never see this call; remote ones POST the
    // request and parse the constrained reply.
    virtual BackendReply call(AgentRole role, const std::string& case_id,
                              const std::string& prompt, const nlohmann::json& context) = 0;
};

std::unique_ptr<AgentBackend> make_deterministic_backend();
std::unique_ptr<AgentBackend> make_remote_backend(const RemoteConfig& config);

// Per-role enable switches for ablation runs; the Coordinator cannot be
// disabled.
struct PipelineOptions {
    double tau_high = 0.7;
    double tau_low = 0.3;
    bool enable_knowledge_extraction = true;
    bool enable_tcm_reasoning = true;
    bool enable_wm_specialist = true;
};

PipelineOptions pipeline_options_from(const KbConfig& config);

// Executes KnowledgeExtraction -> TcmReasoning (forward chaining) ->
// WmSpecialist (posterior queries on bridged nodes) -> Coordinator (merge),
// recording one CoTStep per role. Deterministic given (kb, evidence, opts).
BridgingResult run_case(const KnowledgeBase& kb, const CaseEvidence& evidence,
                        AgentBackend& backend, const PipelineOptions& opts);

// Classifies every TCM finding with degree >= tau_high as exactly one of
// convergence (some bridged WM node carries >= tau_low posterior mass on its
// present state) or discrepancy (no_bridge / weak_wm_support).
std::pair<std::vector<Convergence>, std::vector<Discrepancy>> coordinator_merge(
    const std::map<std::string, double>& tcm_findings,
    const std::map<std::string, std::vector<double>>& wm_findings,
    const std::vector<BridgeLink>& bridges,
    const std::map<std::string, std::size_t>& present_state_index, double tau_high,
    double tau_low);

struct JudgeOptions {
    double theta = 0.6;            // embedding-similarity licensing threshold
    bool fallback_enabled = true;  // similarity fallback when no relation record
};

struct JudgeOutcome {
    Verdict verdict = Verdict::Misaligned;
    std::string branch;  // relation | similarity | no_license | unknown_concept | unknown_verb
    CoTTrace trace;
    std::optional<RatedDimensions> rated;  // remote backends may return these
};

// Deterministic backend: aligned iff the KB licenses (subject, verb class,
// object) by an explicit relation record, or by cosine(subject, object) >=
// theta with the verb class registered for the subject's system. Remote
// backend: sends the perceptual prompt and parses a constrained yes/no.
JudgeOutcome judge_alignment(const KnowledgeBase& kb, const SVOSentence& sentence,
                             AgentBackend& backend, const JudgeOptions& opts);

// Rebuilds a BridgingResult purely from recorded step payloads; with
// deterministic backends this reproduces run_case output exactly.
BridgingResult replay_trace(const CoTTrace& trace);

// The prompt template used for remote perceptual judging; the four rated
// dimensions are requested outputs. Fixture text, not a contract.
std::string perceptual_prompt(const SVOSentence& sentence);

}  // namespace medbridge
