#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "medbridge/agents.hpp"

using namespace medbridge;
using nlohmann::json;

namespace {

const std::string kFixtures = FIXTURES_DIR;

KnowledgeBase liver_kb() { return load_kb(kFixtures + "/liver_fire_kb.jsonl"); }

}  // namespace

TEST_CASE("worked liver-fire case: degree 0.8, bridged posterior, convergence") {
    const KnowledgeBase kb = liver_kb();
    const CaseEvidence evidence = load_evidence(kFixtures + "/liver_fire_kb.jsonl");
    auto backend = make_deterministic_backend();
    const BridgingResult result =
        run_case(kb, evidence, *backend, pipeline_options_from(kb.config));

    CHECK(result.tcm_findings.at("liver_fire") == 0.8);  // min(0.8, 0.9, 0.8), exact
    REQUIRE(result.wm_findings.count("hepatic_inflammation"));
    CHECK(result.wm_findings.at("hepatic_inflammation")[1] ==
          doctest::Approx(0.18 / 0.26).epsilon(1e-12));
    REQUIRE(result.convergences.size() == 1);
    CHECK(result.convergences[0].tcm_prop == "liver_fire");
    CHECK(result.convergences[0].wm_node == "hepatic_inflammation");
    // The three strong evidence propositions carry no bridge of their own.
    CHECK(result.discrepancies.size() == 3);
    for (const auto& d : result.discrepancies) CHECK(d.reason == "no_bridge");

    CHECK(validate_trace(result.trace).empty());
    REQUIRE(result.trace.steps.size() == 4);
    CHECK(result.trace.steps.back().agent == AgentRole::Coordinator);
}

TEST_CASE("empty evidence still produces a complete trace with no-findings rationales") {
    const KnowledgeBase kb = liver_kb();
    CaseEvidence empty;
    empty.id = "empty";
    auto backend = make_deterministic_backend();
    const BridgingResult result =
        run_case(kb, empty, *backend, pipeline_options_from(kb.config));
    CHECK(result.tcm_findings.empty());
    CHECK(result.wm_findings.empty());
    CHECK(result.convergences.empty());
    CHECK(result.discrepancies.empty());
    CHECK(validate_trace(result.trace).empty());
    std::set<AgentRole> roles;
    for (const auto& step : result.trace.steps) roles.insert(step.agent);
    CHECK(roles.count(AgentRole::TcmReasoning) == 1);
    CHECK(roles.count(AgentRole::WmSpecialist) == 1);
    CHECK(roles.count(AgentRole::Coordinator) == 1);
    bool no_findings_seen = false;
    for (const auto& step : result.trace.steps)
        if (step.rationale.find("No findings") != std::string::npos) no_findings_seen = true;
    CHECK(no_findings_seen);
}

TEST_CASE("run_case grounds raw observations through membership curves") {
    const KnowledgeBase kb = load_kb(kFixtures + "/valid_small_kb.jsonl");
    const CaseEvidence evidence = load_evidence(kFixtures + "/valid_small_kb.jsonl", "case1");
    auto backend = make_deterministic_backend();
    const BridgingResult result =
        run_case(kb, evidence, *backend, pipeline_options_from(kb.config));

    // tongue_yellow=8.0 through the [0,10] curve gives 0.8; the weighted rule
    // caps liver_syndrome at min(0.9, min(0.9, 0.8)).
    CHECK(result.tcm_findings.at("tongue_yellow") == 8.0 / 10.0);
    CHECK(result.tcm_findings.at("damp_heat") == 0.9);  // evidence floor beats rule r2
    CHECK(result.tcm_findings.at("liver_syndrome") == 8.0 / 10.0);

    // posterior(inflammation | marker=elevated) = 0.24 / (0.24 + 0.105)
    REQUIRE(result.wm_findings.count("inflammation"));
    CHECK(result.wm_findings.at("inflammation")[1] ==
          doctest::Approx(0.24 / 0.345).epsilon(1e-12));
    REQUIRE(result.convergences.size() == 1);
    CHECK(result.convergences[0].tcm_prop == "liver_syndrome");
    CHECK(result.discrepancies.size() == 2);  // damp_heat and tongue_yellow lack bridges
}

TEST_CASE("coordinator_merge: threshold trivia") {
    const std::vector<BridgeLink> bridges = {{"p", "n", 0.9}};
    const std::map<std::string, std::size_t> present{{"n", 1}};

    auto [conv, disc] = coordinator_merge({{"p", 0.8}}, {{"n", {0.31, 0.69}}}, bridges, present,
                                          0.7, 0.3);
    CHECK(conv.size() == 1);
    CHECK(disc.empty());

    auto [conv2, disc2] = coordinator_merge({{"p", 0.8}}, {}, {}, present, 0.7, 0.3);
    CHECK(conv2.empty());
    REQUIRE(disc2.size() == 1);
    CHECK(disc2[0].reason == "no_bridge");

    auto [conv3, disc3] = coordinator_merge({{"p", 0.8}}, {{"n", {0.9, 0.1}}}, bridges, present,
                                            0.7, 0.3);
    CHECK(conv3.empty());
    REQUIRE(disc3.size() == 1);
    CHECK(disc3[0].reason == "weak_wm_support");

    // Below tau_high: not classified at all.
    auto [conv4, disc4] = coordinator_merge({{"p", 0.69}}, {{"n", {0.0, 1.0}}}, bridges, present,
                                            0.7, 0.3);
    CHECK(conv4.empty());
    CHECK(disc4.empty());
}

TEST_CASE("coordinator_merge sweeps the threshold grid like the predicate oracle") {
    const std::vector<BridgeLink> bridges = {{"p", "n", 1.0}};
    const std::map<std::string, std::size_t> present{{"n", 1}};
    const double tau_high = 0.7, tau_low = 0.3;
    for (int di = 0; di <= 10; ++di) {
        for (int mi = 0; mi <= 10; ++mi) {
            const double degree = di / 10.0;
            const double mass = mi / 10.0;
            auto [conv, disc] =
                coordinator_merge({{"p", degree}}, {{"n", {1.0 - mass, mass}}}, bridges, present,
                                  tau_high, tau_low);
            // Independent re-statement of the two-threshold predicate.
            const bool considered = degree >= tau_high;
            const bool supported = considered && mass >= tau_low;
            CHECK(conv.size() == (supported ? 1u : 0u));
            CHECK(disc.size() == (considered && !supported ? 1u : 0u));
            if (!conv.empty() == !disc.empty() && considered)
                FAIL("finding classified into both or neither bucket");
        }
    }
}

TEST_CASE("every strong finding lands in exactly one bucket") {
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::map<std::string, double> findings;
        std::map<std::string, std::vector<double>> posts;
        std::vector<BridgeLink> bridges;
        std::map<std::string, std::size_t> present;
        for (int p = 0; p < 5; ++p) {
            const std::string prop = "p" + std::to_string(p);
            findings[prop] = unit(rng);
            if (unit(rng) < 0.7) {
                const std::string node = "n" + std::to_string(p);
                bridges.push_back({prop, node, 1.0});
                present[node] = 1;
                const double mass = unit(rng);
                if (unit(rng) < 0.8) posts[node] = {1.0 - mass, mass};
            }
        }
        auto [conv, disc] = coordinator_merge(findings, posts, bridges, present, 0.7, 0.3);
        std::set<std::string> converged, discrepant;
        for (const auto& c : conv) converged.insert(c.tcm_prop);
        for (const auto& d : disc) discrepant.insert(d.tcm_prop);
        for (const auto& [prop, degree] : findings) {
            const bool strong = degree >= 0.7;
            const bool in_conv = converged.count(prop) > 0;
            const bool in_disc = discrepant.count(prop) > 0;
            CHECK(in_conv + in_disc == (strong ? 1 : 0));
        }
    }
}

TEST_CASE("judge_alignment matches the hand-built truth table on all 40 sentences") {
    const KnowledgeBase kb = load_kb(kFixtures + "/svo_kb.jsonl");
    const DatasetManifest ds = load_dataset(kFixtures + "/svo40.jsonl");
    std::ifstream in(kFixtures + "/svo40_truth.json");
    REQUIRE(in);
    const json truth = json::parse(in);

    auto backend = make_deterministic_backend();
    JudgeOptions opts;
    opts.theta = kb.config.theta;
    for (const auto& sentence : ds.sentences) {
        const JudgeOutcome outcome = judge_alignment(kb, sentence, *backend, opts);
        INFO("sentence " << sentence.id);
        CHECK(to_string(outcome.verdict) == truth.at(sentence.id).at("verdict").get<std::string>());
        CHECK(outcome.branch == truth.at(sentence.id).at("branch").get<std::string>());
        CHECK(validate_trace(outcome.trace).empty());
    }
}

TEST_CASE("judge_alignment is a pure function of kb, sentence, config") {
    const KnowledgeBase kb = load_kb(kFixtures + "/svo_kb.jsonl");
    const DatasetManifest ds = load_dataset(kFixtures + "/svo40.jsonl");
    auto backend = make_deterministic_backend();
    JudgeOptions opts;
    const auto a = judge_alignment(kb, ds.sentences[0], *backend, opts);
    const auto b = judge_alignment(kb, ds.sentences[0], *backend, opts);
    CHECK(a.verdict == b.verdict);
    CHECK(a.trace.to_json() == b.trace.to_json());
}

TEST_CASE("unknown concept: error when fallback disabled, misaligned otherwise") {
    const KnowledgeBase kb = load_kb(kFixtures + "/svo_kb.jsonl");
    SVOSentence s;
    s.id = "mystery";
    s.text_en = "The unicorn horn strengthens immunity";
    s.subject = "unicorn horn";
    s.verb = "增强";
    s.object = "免疫力";
    s.system = SvoSystem::WM;
    s.label = Verdict::Misaligned;
    auto backend = make_deterministic_backend();
    JudgeOptions no_fallback;
    no_fallback.fallback_enabled = false;
    CHECK_THROWS_WITH_AS(judge_alignment(kb, s, *backend, no_fallback),
                         doctest::Contains("unicorn horn"), AgentError);
    JudgeOptions with_fallback;
    const auto outcome = judge_alignment(kb, s, *backend, with_fallback);
    CHECK(outcome.verdict == Verdict::Misaligned);
    CHECK(outcome.branch == "unknown_concept");
}

TEST_CASE("trace replay reproduces run_case results exactly") {
    const KnowledgeBase kb = liver_kb();
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto backend = make_deterministic_backend();
    for (int trial = 0; trial < 25; ++trial) {
        CaseEvidence ev;
        ev.id = "case" + std::to_string(trial);
        for (const auto& prop : {"irritability", "bitter_taste", "red_tongue_tip"})
            if (unit(rng) < 0.8) ev.fuzzy.base_degrees[prop] = unit(rng);
        if (unit(rng) < 0.5) ev.wm_observations["crp_elevated"] = unit(rng) < 0.5 ? "yes" : "no";
        const BridgingResult original =
            run_case(kb, ev, *backend, pipeline_options_from(kb.config));
        const BridgingResult replayed = replay_trace(original.trace);
        CHECK(replayed.to_json() == original.to_json());
    }
}

TEST_CASE("ablation flags skip roles but keep the Coordinator") {
    const KnowledgeBase kb = liver_kb();
    const CaseEvidence evidence = load_evidence(kFixtures + "/liver_fire_kb.jsonl");
    auto backend = make_deterministic_backend();

    PipelineOptions no_wm = pipeline_options_from(kb.config);
    no_wm.enable_wm_specialist = false;
    const BridgingResult without_wm = run_case(kb, evidence, *backend, no_wm);
    CHECK(without_wm.wm_findings.empty());
    CHECK(without_wm.convergences.empty());
    REQUIRE(without_wm.discrepancies.size() == 4);
    bool liver_weak = false;
    for (const auto& d : without_wm.discrepancies)
        if (d.tcm_prop == "liver_fire") liver_weak = d.reason == "weak_wm_support";
    CHECK(liver_weak);  // bridged but unqueried: weak support, not missing bridge
    CHECK(without_wm.trace.steps.back().agent == AgentRole::Coordinator);

    PipelineOptions no_tcm = pipeline_options_from(kb.config);
    no_tcm.enable_tcm_reasoning = false;
    const BridgingResult without_tcm = run_case(kb, evidence, *backend, no_tcm);
    CHECK(without_tcm.tcm_findings.empty());
    CHECK(without_tcm.convergences.empty());
}

TEST_CASE("validate_trace rejects malformed traces") {
    CoTTrace trace;
    trace.case_id = "x";
    CHECK(!validate_trace(trace).empty());  // no steps

    CoTStep step;
    step.agent = AgentRole::TcmReasoning;
    step.rationale = "r";
    step.payload = {{"kind", "degree_assignment"}, {"degrees", json::object()}};
    step.timestamp = 0;
    trace.steps.push_back(step);
    CHECK(!validate_trace(trace).empty());  // final step not Coordinator

    CoTStep bad_kind;
    bad_kind.agent = AgentRole::Coordinator;
    bad_kind.rationale = "r";
    bad_kind.payload = {{"kind", "degree_assignment"}};
    bad_kind.timestamp = 1;
    trace.steps.push_back(bad_kind);
    CHECK(!validate_trace(trace).empty());  // wrong payload kind for Coordinator
}

TEST_CASE("agent wire format marshals and validates") {
    const json req = build_agent_request(AgentRole::TcmReasoning, "case9", "prompt text",
                                         {{"k", "v"}}, "model-x");
    CHECK(req.at("role") == "TcmReasoning");
    CHECK(req.at("case_id") == "case9");
    CHECK(req.at("model") == "model-x");

    const BackendReply reply =
        parse_agent_reply(R"({"rationale":"because","payload":{"verdict":"yes"}})");
    CHECK(reply.rationale == "because");
    CHECK(reply.payload.at("verdict") == "yes");

    CHECK_THROWS_AS(parse_agent_reply("not json"), AgentError);
    CHECK_THROWS_AS(parse_agent_reply(R"({"payload":{}})"), AgentError);
    CHECK_THROWS_AS(parse_agent_reply(R"({"rationale":"x"})"), AgentError);
}

TEST_CASE("remote backend: end-to-end judging against a local server") {
    httplib::Server server;
    std::atomic<int> calls{0};
    server.Post("/v1/agent", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        const json body = json::parse(req.body);
        CHECK(body.contains("prompt"));
        CHECK(body.at("context").contains("sentence"));
        json reply;
        reply["rationale"] = "The statement matches classical usage.";
        reply["payload"] = {{"verdict", "yes"},
                            {"rated",
                             {{"familiarity", 7.5},
                              {"emotional_valence", 3.0},
                              {"emotional_arousal", 2.0},
                              {"semantic_accuracy", 8.0}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    const KnowledgeBase kb = load_kb(kFixtures + "/svo_kb.jsonl");
    const DatasetManifest ds = load_dataset(kFixtures + "/svo40.jsonl");
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.model = "test-model";
    auto backend = make_remote_backend(config);
    const JudgeOutcome outcome = judge_alignment(kb, ds.sentences[0], *backend, {});
    CHECK(outcome.verdict == Verdict::Aligned);
    CHECK(outcome.branch == "remote");
    REQUIRE(outcome.rated.has_value());
    CHECK(outcome.rated->familiarity == doctest::Approx(7.5));
    CHECK(calls.load() == 1);

    server.stop();
    server_thread.join();
}

TEST_CASE("remote backend: malformed constrained reply is a protocol error") {
    httplib::Server server;
    server.Post("/v1/agent", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"rationale":"shrug","payload":{"verdict":"perhaps"}})",
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

    const KnowledgeBase kb = load_kb(kFixtures + "/svo_kb.jsonl");
    const DatasetManifest ds = load_dataset(kFixtures + "/svo40.jsonl");
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    auto backend = make_remote_backend(config);
    CHECK_THROWS_AS(judge_alignment(kb, ds.sentences[0], *backend, {}), BackendError);

    server.stop();
    server_thread.join();
}

TEST_CASE("remote backend failure carries the partial trace") {
    const KnowledgeBase kb = liver_kb();
    const CaseEvidence evidence = load_evidence(kFixtures + "/liver_fire_kb.jsonl");
    RemoteConfig config;
    config.endpoint = "http://127.0.0.1:9";  // nothing listens on the discard port
    config.timeout_ms = 200;
    auto backend = make_remote_backend(config);
    try {
        run_case(kb, evidence, *backend, pipeline_options_from(kb.config));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.partial_trace.case_id == "liver_fire_case");
        // Died narrating the very first step: no completed steps yet.
        CHECK(e.partial_trace.steps.size() < 4);
    }
}

TEST_CASE("deterministic backend refuses wire calls") {
    auto backend = make_deterministic_backend();
    CHECK(!backend->is_remote());
    CHECK_THROWS_AS(backend->call(AgentRole::Coordinator, "c", "p", {}), AgentError);
}
