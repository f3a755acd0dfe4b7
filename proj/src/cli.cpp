#include "medbridge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "medbridge/agents.hpp"
#include "medbridge/common.hpp"
#include "medbridge/dataset.hpp"
#include "medbridge/embed.hpp"
#include "medbridge/jsonl.hpp"
#include "medbridge/kb.hpp"
#include "medbridge/metrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace medbridge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Precedence: flag > environment > config file > default. Flags land here
// last because CLI11 callbacks run after the file is merged.
struct RunConfig {
    std::string kb_path;
    std::string dataset_path;
    std::string output_dir = "out";
    std::string backend_kind = "deterministic";
    std::string endpoint;
    std::string model;
    int timeout_ms = 10000;
    std::optional<double> tau_high;  // unset: take the KB config value
    std::optional<double> tau_low;
    std::optional<double> theta;
    bool fallback_enabled = true;
    double fraction = 0.3;
    std::uint64_t seed = 7;
    std::string report_format = "both";  // markdown | csv | both
    int workers = 1;
    std::string model_label;
    std::optional<RatedDimensions> rated;  // pass-through values for the report
    std::vector<std::string> disabled_roles;
};

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("config is not valid JSON: " + path);
    RunConfig cfg;
    cfg.kb_path = j.value("kb", "");
    cfg.dataset_path = j.value("dataset", "");
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        cfg.backend_kind = b.value("kind", cfg.backend_kind);
        cfg.endpoint = b.value("endpoint", "");
        cfg.model = b.value("model", "");
        cfg.timeout_ms = b.value("timeout_ms", cfg.timeout_ms);
    }
    if (j.contains("tau_high")) cfg.tau_high = j["tau_high"].get<double>();
    if (j.contains("tau_low")) cfg.tau_low = j["tau_low"].get<double>();
    if (j.contains("theta")) cfg.theta = j["theta"].get<double>();
    cfg.fallback_enabled = j.value("fallback_enabled", cfg.fallback_enabled);
    if (j.contains("split")) {
        cfg.fraction = j["split"].value("fraction", cfg.fraction);
        cfg.seed = j["split"].value("seed", cfg.seed);
    }
    cfg.report_format = j.value("report_format", cfg.report_format);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.model_label = j.value("model_label", "");
    if (j.contains("rated") && j["rated"].is_object()) {
        RatedDimensions dims;
        dims.familiarity = j["rated"].value("familiarity", 0.0);
        dims.emotional_valence = j["rated"].value("emotional_valence", 0.0);
        dims.emotional_arousal = j["rated"].value("emotional_arousal", 0.0);
        dims.semantic_accuracy = j["rated"].value("semantic_accuracy", 0.0);
        cfg.rated = dims;
    }
    if (j.contains("disabled_roles"))
        cfg.disabled_roles = j["disabled_roles"].get<std::vector<std::string>>();
    return cfg;
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* e = std::getenv("MEDBRIDGE_REMOTE_ENDPOINT")) cfg.endpoint = e;
    if (const char* e = std::getenv("MEDBRIDGE_REMOTE_MODEL")) cfg.model = e;
}

std::unique_ptr<AgentBackend> make_backend(const RunConfig& cfg) {
    if (cfg.backend_kind == "deterministic") return make_deterministic_backend();
    if (cfg.backend_kind == "remote") {
        RemoteConfig rc;
        rc.endpoint = cfg.endpoint;
        rc.model = cfg.model;
        rc.timeout_ms = cfg.timeout_ms;
        return make_remote_backend(rc);
    }
    throw AgentError("unknown backend kind '" + cfg.backend_kind + "'");
}

PipelineOptions pipeline_options(const KnowledgeBase& kb, const RunConfig& cfg) {
    PipelineOptions opts = pipeline_options_from(kb.config);
    if (cfg.tau_high) opts.tau_high = *cfg.tau_high;
    if (cfg.tau_low) opts.tau_low = *cfg.tau_low;
    for (const auto& role : cfg.disabled_roles) {
        if (role == "KnowledgeExtraction") opts.enable_knowledge_extraction = false;
        else if (role == "TcmReasoning") opts.enable_tcm_reasoning = false;
        else if (role == "WmSpecialist") opts.enable_wm_specialist = false;
        else throw AgentError("role '" + role + "' cannot be disabled");
    }
    return opts;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_trace_jsonl(const fs::path& path, const CoTTrace& trace) {
    std::vector<json> records;
    for (const auto& step : trace.to_json()) records.push_back(step);
    jsonl::write_records(path.string(), records);
}

int cmd_kb_check(const std::string& kb_path, std::ostream& out, std::ostream& err) {
    try {
        const KnowledgeBase kb = load_kb(kb_path);
        out << "ok: " << kb.concepts.size() << " concept(s), " << kb.propositions.size()
            << " proposition(s), " << kb.rules.size() << " rule(s), "
            << kb.bayes_net.size() << " bayes node(s), version " << kb.version << "\n";
        return kOk;
    } catch (const ConsistencyError& e) {
        for (const auto& c : e.findings) err << to_string(c.kind) << ": " << c.message << "\n";
        return kFindings;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_kb_extend(const std::string& kb_path, const std::string& additions_path,
                  const std::string& rules_path, const std::string& out_path, std::ostream& out,
                  std::ostream& err) {
    try {
        const KnowledgeBase kb = load_kb(kb_path);
        KbAdditions additions;
        if (!additions_path.empty()) additions = load_additions(additions_path, &kb);
        if (!rules_path.empty()) {
            std::set<std::string> taken;
            for (const auto& r : kb.rules) taken.insert(r.id);
            std::size_t serial = kb.rules.size();
            for (Rule& r : parse_rule_file(rules_path)) {
                do {
                    r.id = "r" + std::to_string(++serial);
                } while (taken.count(r.id));
                taken.insert(r.id);
                additions.rules.push_back(std::move(r));
            }
        }
        const KnowledgeBase next = extend_kb(kb, additions);
        save_kb(next, out_path);
        out << "extended: version " << kb.version << " -> " << next.version << ", written to "
            << out_path << "\n";
        return kOk;
    } catch (const ConsistencyError& e) {
        for (const auto& c : e.findings) err << to_string(c.kind) << ": " << c.message << "\n";
        return kFindings;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_infer(const RunConfig& cfg, const std::string& evidence_path, const std::string& case_id,
              std::ostream& out, std::ostream& err) {
    try {
        const KnowledgeBase kb = load_kb(cfg.kb_path);
        const CaseEvidence evidence = load_evidence(evidence_path, case_id);
        fs::create_directories(cfg.output_dir);
        auto backend = make_backend(cfg);
        BridgingResult result;
        try {
            result = run_case(kb, evidence, *backend, pipeline_options(kb, cfg));
        } catch (const BackendError& e) {
            write_trace_jsonl(fs::path(cfg.output_dir) / "trace.jsonl", e.partial_trace);
            err << "backend error: " << e.what() << " (partial trace written)\n";
            return kOperationalError;
        }
        write_text(fs::path(cfg.output_dir) / "result.json", result.to_json().dump(2) + "\n");
        write_trace_jsonl(fs::path(cfg.output_dir) / "trace.jsonl", result.trace);
        if (result.tcm_findings.empty()) {
            out << "no findings\n";
        } else {
            out << result.verdict << "\n";
            for (const auto& c : result.convergences)
                out << "convergence: " << c.tcm_prop << " ~ " << c.wm_node << " (" << c.note
                    << ")\n";
            for (const auto& d : result.discrepancies)
                out << "discrepancy: " << d.tcm_prop << " (" << d.reason << ")\n";
        }
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_bayes_query(const std::string& kb_path, const std::string& node,
                    const std::vector<std::string>& evidence_kv, std::ostream& out,
                    std::ostream& err) {
    try {
        const KnowledgeBase kb = load_kb(kb_path);
        Assignment evidence;
        for (const auto& kv : evidence_kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw BayesError("evidence must be node=state, got '" + kv + "'");
            evidence[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
        const auto vec = posterior(kb.bayes_net, node, evidence);
        const auto& states = kb.bayes_net.node(node).states;
        for (std::size_t i = 0; i < states.size(); ++i)
            out << states[i] << " " << json(vec[i]).dump() << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_bayes_learn(const std::string& kb_path, const std::string& data_path, double alpha,
                    bool use_em, int max_iters, double tol, std::uint64_t seed,
                    const std::string& out_path, std::ostream& out, std::ostream& err) {
    try {
        KnowledgeBase kb = load_kb(kb_path);
        const std::vector<Record> data = load_records(data_path);
        if (use_em) {
            EmOptions opts;
            opts.max_iters = max_iters;
            opts.tol = tol;
            opts.alpha = alpha;
            opts.seed = seed;
            const EmResult result = learn_em(kb.bayes_net, data, opts);
            kb.bayes_net = result.net;
            out << "em: " << result.iterations << " iteration(s), log-likelihood "
                << json(result.log_likelihood).dump() << "\n";
        } else {
            std::vector<std::string> warnings;
            kb.bayes_net = learn_ml(kb.bayes_net, data, alpha, &warnings);
            for (const auto& w : warnings) err << "warning: " << w << "\n";
            out << "ml: " << data.size() << " record(s), alpha " << alpha << "\n";
        }
        ++kb.version;
        save_kb(kb, out_path);
        out << "written to " << out_path << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_embed_fetch(const std::string& tokens_path, std::size_t d, const std::string& out_path,
                    int timeout_ms, int retries, std::ostream& out, std::ostream& err) {
    try {
        std::ifstream in(tokens_path, std::ios::binary);
        if (!in) throw IoError("cannot open token list: " + tokens_path);
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) tokens.push_back(line);
        }
        ProviderConfig cfg;
        cfg.timeout_ms = timeout_ms;
        cfg.retries = retries;
        const EmbeddingTable table = fetch_external_embeddings(tokens, d, cfg);
        save_table(table, out_path);
        out << "fetched " << table.vocab.size() << " vectors of dimension " << d << " -> "
            << out_path << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_embed_build(const std::string& corpus_path, const std::string& out_path, std::size_t d,
                    std::size_t window, std::uint64_t seed, const std::string& merges_path,
                    bool serial, std::ostream& out, std::ostream& err) {
    try {
        text::TokenizerConfig tok;
        if (!merges_path.empty()) {
            std::ifstream in(merges_path, std::ios::binary);
            if (!in) throw IoError("cannot open merge list: " + merges_path);
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (!line.empty()) tok.merges.push_back(line);
            }
        }
        const Corpus corpus = load_corpus(corpus_path, tok);
        BuildOptions opts;
        opts.d = d;
        opts.window = window;
        opts.seed = seed;
        opts.mode = serial ? kernels::ExecMode::Serial : kernels::ExecMode::Parallel;
        const EmbeddingTable table = build_embeddings(corpus, opts);
        save_table(table, out_path);
        out << "built " << table.vocab.size() << " vectors of dimension " << table.d << " -> "
            << out_path << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_embed_topk(const std::string& table_path, const std::string& query, std::size_t k,
                   std::ostream& out, std::ostream& err) {
    try {
        const EmbeddingTable table = load_table(table_path);
        for (const auto& [token, sim] : top_k(table, query, k))
            out << token << " " << json(sim).dump() << "\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_dataset_validate(const std::string& path, std::ostream& out, std::ostream& err) {
    try {
        const DatasetManifest m = load_dataset(path);
        long total = 0;
        for (const auto& [cls, count] : m.actual_counts()) {
            out << cls << ": " << count << "\n";
            total += count;
        }
        out << "total: " << total << "\n";
        return kOk;
    } catch (const DatasetError& e) {
        err << "invalid dataset: " << e.what() << "\n";
        return kFindings;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_dataset_split(const std::string& path, double fraction, std::uint64_t seed,
                      const std::string& out_dir, std::ostream& out, std::ostream& err) {
    try {
        const DatasetManifest m = load_dataset(path);
        auto [train, test] = stratified_split(m, fraction, seed);
        fs::create_directories(out_dir);
        save_dataset(train, (fs::path(out_dir) / "train.jsonl").string());
        save_dataset(test, (fs::path(out_dir) / "test.jsonl").string());
        out << "train: " << train.sentences.size() << ", test: " << test.sentences.size() << "\n";
        return kOk;
    } catch (const DatasetError& e) {
        err << "invalid dataset: " << e.what() << "\n";
        return kFindings;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

struct SentenceOutcome {
    std::string id;
    std::string verdict;  // aligned | misaligned | abstained
    std::string branch;
    std::string label;
    std::string error;
};

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const KnowledgeBase kb = load_kb(cfg.kb_path);
        const DatasetManifest dataset = load_dataset(cfg.dataset_path);
        auto [train, test] = stratified_split(dataset, cfg.fraction, cfg.seed);

        JudgeOptions jopts;
        jopts.theta = cfg.theta ? *cfg.theta : kb.config.theta;
        jopts.fallback_enabled = cfg.fallback_enabled;

        const auto& sentences = test.sentences;
        std::vector<SentenceOutcome> outcomes(sentences.size());
        std::vector<json> trace_records;

        const int workers = std::max(1, cfg.workers);
#ifndef _OPENMP
        (void)workers;  // serial fallback
#endif
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(workers) if (workers > 1)
#endif
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sentences.size()); ++i) {
            const auto& s = sentences[static_cast<std::size_t>(i)];
            auto& o = outcomes[static_cast<std::size_t>(i)];
            o.id = s.id;
            o.label = to_string(s.label);
            // One backend per case keeps remote clients unshared across threads.
            auto backend = make_backend(cfg);
            try {
                const JudgeOutcome j = judge_alignment(kb, s, *backend, jopts);
                o.verdict = to_string(j.verdict);
                o.branch = j.branch;
            } catch (const std::exception& e) {
                o.verdict = "abstained";
                o.error = e.what();
            }
        }

        std::vector<Verdict> predictions;
        std::vector<Verdict> labels;
        long abstentions = 0;
        std::vector<json> verdict_records;
        for (const auto& o : outcomes) {
            json rec;
            rec["id"] = o.id;
            rec["verdict"] = o.verdict;
            if (!o.branch.empty()) rec["branch"] = o.branch;
            rec["label"] = o.label;
            if (!o.error.empty()) rec["error"] = o.error;
            verdict_records.push_back(std::move(rec));
            if (o.verdict == "abstained") {
                ++abstentions;
                continue;
            }
            predictions.push_back(verdict_from_string(o.verdict));
            labels.push_back(verdict_from_string(o.label));
        }
        if (predictions.empty()) throw MetricsError("every sentence was abstained");

        const Confusion confusion = confusion_from(predictions, labels);
        MetricsReport report = compute_metrics(confusion);
        report.model = !cfg.model_label.empty()
                           ? cfg.model_label
                           : (cfg.backend_kind == "remote" && !cfg.model.empty() ? cfg.model
                                                                                 : "deterministic-kb");
        report.rated = cfg.rated;
        report.abstentions = abstentions;

        fs::create_directories(cfg.output_dir);
        const fs::path dir(cfg.output_dir);
        jsonl::write_records((dir / "verdicts.jsonl").string(), verdict_records);
        {
            json cj;
            cj["tp"] = confusion.tp;
            cj["fp"] = confusion.fp;
            cj["fn"] = confusion.fn;
            cj["tn"] = confusion.tn;
            cj["abstentions"] = abstentions;
            cj["evaluated"] = static_cast<long>(predictions.size());
            cj["test_size"] = static_cast<long>(sentences.size());
            write_text(dir / "confusion.json", cj.dump(2) + "\n");
        }
        if (cfg.report_format == "markdown" || cfg.report_format == "both")
            write_text(dir / "report.md", render_report({report}, ReportFormat::Markdown));
        if (cfg.report_format == "csv" || cfg.report_format == "both")
            write_text(dir / "report.csv", render_report({report}, ReportFormat::Csv));

        // Evaluation-level trace: metrics step, closed by the Coordinator.
        {
            CoTTrace trace;
            trace.case_id = "evaluation";
            json metrics_payload;
            metrics_payload["kind"] = "metrics";
            metrics_payload["accuracy"] = report.accuracy;
            metrics_payload["recall"] = report.recall;
            metrics_payload["precision"] = report.precision;
            metrics_payload["f1"] = report.f1;
            metrics_payload["abstentions"] = abstentions;
            CoTStep eval_step;
            eval_step.agent = AgentRole::Evaluation;
            eval_step.rationale = "Scored " + std::to_string(predictions.size()) +
                                  " verdict(s) against labels; " + std::to_string(abstentions) +
                                  " abstention(s).";
            eval_step.payload = metrics_payload;
            eval_step.timestamp = 0;
            trace.steps.push_back(std::move(eval_step));
            json verdict_payload;
            verdict_payload["kind"] = "verdict";
            verdict_payload["convergences"] = json::array();
            verdict_payload["discrepancies"] = json::array();
            verdict_payload["verdict"] = "evaluation complete";
            CoTStep final_step;
            final_step.agent = AgentRole::Coordinator;
            final_step.rationale = "Evaluation reports rendered.";
            final_step.payload = verdict_payload;
            final_step.timestamp = 1;
            trace.steps.push_back(std::move(final_step));
            write_trace_jsonl(dir / "eval_trace.jsonl", trace);
        }

        out << "evaluated " << predictions.size() << "/" << sentences.size() << " test sentence(s)"
            << (abstentions ? " (" + std::to_string(abstentions) + " abstained)" : "") << "\n";
        out << "tp=" << confusion.tp << " fp=" << confusion.fp << " fn=" << confusion.fn
            << " tn=" << confusion.tn << "\n";
        out << "accuracy=" << json(report.accuracy).dump() << "% recall="
            << json(report.recall).dump() << "% f1=" << json(report.f1).dump() << "%\n";
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

int cmd_trace_show(const std::string& path, std::ostream& out, std::ostream& err) {
    try {
        jsonl::for_each_record(path, [&](const json& rec, int line) {
            const std::string role = jsonl::require_string(rec, "role", line);
            const auto ts = rec.value("ts", 0);
            out << "[" << ts << "] " << role << ": "
                << jsonl::get_string_or(rec, "rationale", "") << "\n";
            if (rec.contains("payload") && rec["payload"].is_object())
                out << "      payload kind: " << rec["payload"].value("kind", "?") << "\n";
        });
        return kOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hybrid symbolic-fuzzy-Bayesian bridge between TCM and WM terminologies"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    auto ensure_config = [&](const std::string& path) {
        cfg = load_config_file(path);
        apply_env_overrides(cfg);
    };

    // kb check / kb extend
    auto* kb_cmd = app.add_subcommand("kb", "Knowledge-base maintenance");
    kb_cmd->require_subcommand(1);
    std::string kb_path, additions_path, kb_out;
    auto* kb_check = kb_cmd->add_subcommand("check", "Validate a KB manifest");
    kb_check->add_option("kb", kb_path, "KB manifest path")->required();
    auto* kb_extend = kb_cmd->add_subcommand("extend", "Apply additions atomically");
    std::string rules_path;
    kb_extend->add_option("kb", kb_path, "KB manifest path")->required();
    kb_extend->add_option("--add", additions_path, "additions manifest");
    kb_extend->add_option("--rules", rules_path, "plain rule file, one rule per line");
    kb_extend->add_option("--out", kb_out, "output manifest path")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "Run the bridging pipeline on one case");
    std::string evidence_path, case_id;
    infer->add_option("--kb", cfg.kb_path, "KB manifest path")->required();
    infer->add_option("--evidence", evidence_path, "evidence manifest")->required();
    infer->add_option("--case", case_id, "evidence record id (when the file has several)");
    infer->add_option("--out", cfg.output_dir, "output directory");
    infer->add_option("--backend", cfg.backend_kind, "deterministic|remote");
    auto* infer_endpoint = infer->add_option("--endpoint", cfg.endpoint, "remote endpoint");
    auto* infer_model = infer->add_option("--model", cfg.model, "remote model name");
    infer->add_option("--timeout-ms", cfg.timeout_ms, "remote timeout");
    double tau_high_flag = 0, tau_low_flag = 0;
    auto* th = infer->add_option("--tau-high", tau_high_flag, "strong-finding threshold");
    auto* tl = infer->add_option("--tau-low", tau_low_flag, "posterior-support threshold");
    infer->add_option("--disable-role", cfg.disabled_roles,
                      "ablation: skip a role (repeatable)");

    // bayes query / learn
    auto* bayes = app.add_subcommand("bayes", "Bayesian network queries and learning");
    bayes->require_subcommand(1);
    auto* bquery = bayes->add_subcommand("query", "Exact posterior for one node");
    std::string query_node;
    std::vector<std::string> evidence_kv;
    bquery->add_option("--kb", kb_path, "KB manifest path")->required();
    bquery->add_option("--node", query_node, "query node id")->required();
    bquery->add_option("--evidence", evidence_kv, "node=state (repeatable)");
    auto* blearn = bayes->add_subcommand("learn", "Fit CPTs from JSON-lines records");
    std::string learn_data, learn_out;
    double learn_alpha = 1.0, learn_tol = 1e-6;
    int learn_iters = 50;
    std::uint64_t learn_seed = 0;
    bool learn_em_flag = false;
    blearn->add_option("--kb", kb_path, "KB manifest supplying the structure")->required();
    blearn->add_option("--data", learn_data, "training records, one JSON object per line")
        ->required();
    blearn->add_option("--out", learn_out, "output KB manifest")->required();
    blearn->add_option("--alpha", learn_alpha, "additive smoothing");
    blearn->add_flag("--em", learn_em_flag, "expectation-maximization for incomplete records");
    blearn->add_option("--max-iters", learn_iters, "EM iteration cap");
    blearn->add_option("--tol", learn_tol, "EM log-likelihood tolerance");
    blearn->add_option("--seed", learn_seed, "EM initialization seed");

    // embed build / topk
    auto* embed = app.add_subcommand("embed", "Corpus-statistics embeddings");
    embed->require_subcommand(1);
    auto* ebuild = embed->add_subcommand("build", "Build an embedding table");
    std::string corpus_path, table_path, merges_path;
    std::size_t dim = 64, window = 4, k = 5;
    std::uint64_t seed = 0;
    bool serial = false;
    ebuild->add_option("--corpus", corpus_path, "one document per line")->required();
    ebuild->add_option("--out", table_path, "output table path")->required();
    ebuild->add_option("--d", dim, "embedding dimension");
    ebuild->add_option("--window", window, "co-occurrence window");
    ebuild->add_option("--seed", seed, "factorization seed");
    ebuild->add_option("--merges", merges_path, "multi-character term list");
    ebuild->add_flag("--serial", serial, "use the serial reference kernels");
    auto* etopk = embed->add_subcommand("topk", "Nearest neighbours by cosine");
    std::string query_token;
    etopk->add_option("--table", table_path, "table path")->required();
    etopk->add_option("--query", query_token, "query token")->required();
    etopk->add_option("--k", k, "neighbour count");
    auto* efetch = embed->add_subcommand(
        "fetch", "Pull vectors from the external provider (MEDBRIDGE_EMBED_ENDPOINT)");
    std::string tokens_path;
    int fetch_timeout = 5000, fetch_retries = 2;
    efetch->add_option("--tokens", tokens_path, "token list, one per line")->required();
    efetch->add_option("--out", table_path, "output table path")->required();
    efetch->add_option("--d", dim, "expected dimension");
    efetch->add_option("--timeout-ms", fetch_timeout, "per-request timeout");
    efetch->add_option("--retries", fetch_retries, "retry count");

    // dataset validate / split
    auto* dataset = app.add_subcommand("dataset", "Benchmark dataset utilities");
    dataset->require_subcommand(1);
    std::string dataset_path, split_dir;
    double fraction = 0.3;
    std::uint64_t split_seed = 7;
    auto* dvalidate = dataset->add_subcommand("validate", "Validate a dataset manifest");
    dvalidate->add_option("dataset", dataset_path, "dataset path")->required();
    auto* dsplit = dataset->add_subcommand("split", "Stratified train/test split");
    dsplit->add_option("dataset", dataset_path, "dataset path")->required();
    dsplit->add_option("--fraction", fraction, "test fraction in (0,1)");
    dsplit->add_option("--seed", split_seed, "shuffle seed");
    dsplit->add_option("--out", split_dir, "output directory")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Judge the test split and report metrics");
    eval->add_option("--config", config_path, "JSON run configuration");
    std::string eval_kb_v, eval_ds_v, eval_out_v, eval_backend_v, eval_label_v;
    double eval_frac_v = 0.3, eval_theta_v = 0.6;
    std::uint64_t eval_seed_v = 7;
    int eval_workers_v = 1;
    auto* eval_kb = eval->add_option("--kb", eval_kb_v, "KB manifest path");
    auto* eval_ds = eval->add_option("--dataset", eval_ds_v, "dataset path");
    auto* eval_out = eval->add_option("--out", eval_out_v, "output directory");
    auto* eval_backend = eval->add_option("--backend", eval_backend_v, "deterministic|remote");
    auto* eval_frac = eval->add_option("--fraction", eval_frac_v, "test fraction");
    auto* eval_seed = eval->add_option("--seed", eval_seed_v, "split seed");
    auto* eval_workers = eval->add_option("--workers", eval_workers_v, "parallel judging workers");
    auto* eval_theta = eval->add_option("--theta", eval_theta_v, "similarity threshold");
    auto* eval_label = eval->add_option("--model-label", eval_label_v, "report row label");

    // trace show
    auto* trace = app.add_subcommand("trace", "Chain-of-thought trace utilities");
    trace->require_subcommand(1);
    std::string trace_path;
    auto* tshow = trace->add_subcommand("show", "Pretty-print a trace file");
    tshow->add_option("trace", trace_path, "trace JSON-lines path")->required();

    std::vector<const char*> argv;
    argv.push_back("medbridge");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kOk;
        }
        err << "usage error: " << e.what() << "\n";
        return kOperationalError;
    }

    try {
        if (kb_check->parsed()) return cmd_kb_check(kb_path, out, err);
        if (kb_extend->parsed()) {
            if (additions_path.empty() && rules_path.empty()) {
                err << "usage error: kb extend needs --add and/or --rules\n";
                return kOperationalError;
            }
            return cmd_kb_extend(kb_path, additions_path, rules_path, kb_out, out, err);
        }
        if (infer->parsed()) {
            // Environment fills only the gaps flags left open.
            RunConfig env_only;
            apply_env_overrides(env_only);
            if (!infer_endpoint->count() && !env_only.endpoint.empty())
                cfg.endpoint = env_only.endpoint;
            if (!infer_model->count() && !env_only.model.empty()) cfg.model = env_only.model;
            if (th->count()) cfg.tau_high = tau_high_flag;
            if (tl->count()) cfg.tau_low = tau_low_flag;
            return cmd_infer(cfg, evidence_path, case_id, out, err);
        }
        if (bquery->parsed()) return cmd_bayes_query(kb_path, query_node, evidence_kv, out, err);
        if (blearn->parsed())
            return cmd_bayes_learn(kb_path, learn_data, learn_alpha, learn_em_flag, learn_iters,
                                   learn_tol, learn_seed, learn_out, out, err);
        if (ebuild->parsed())
            return cmd_embed_build(corpus_path, table_path, dim, window, seed, merges_path,
                                   serial, out, err);
        if (etopk->parsed()) return cmd_embed_topk(table_path, query_token, k, out, err);
        if (efetch->parsed())
            return cmd_embed_fetch(tokens_path, dim, table_path, fetch_timeout, fetch_retries,
                                   out, err);
        if (dvalidate->parsed()) return cmd_dataset_validate(dataset_path, out, err);
        if (dsplit->parsed())
            return cmd_dataset_split(dataset_path, fraction, split_seed, split_dir, out, err);
        if (eval->parsed()) {
            RunConfig base;
            if (!config_path.empty()) {
                ensure_config(config_path);
                base = cfg;
            } else {
                apply_env_overrides(base);
            }
            if (eval_kb->count()) base.kb_path = eval_kb_v;
            if (eval_ds->count()) base.dataset_path = eval_ds_v;
            if (eval_out->count()) base.output_dir = eval_out_v;
            if (eval_backend->count()) base.backend_kind = eval_backend_v;
            if (eval_frac->count()) base.fraction = eval_frac_v;
            if (eval_seed->count()) base.seed = eval_seed_v;
            if (eval_workers->count()) base.workers = eval_workers_v;
            if (eval_theta->count()) base.theta = eval_theta_v;
            if (eval_label->count()) base.model_label = eval_label_v;
            if (base.kb_path.empty() || base.dataset_path.empty())
                throw SchemaError("eval needs --kb and --dataset (or a --config providing them)");
            return cmd_eval(base, out, err);
        }
        if (tshow->parsed()) return cmd_trace_show(trace_path, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kOperationalError;
    }
    err << "no subcommand\n";
    return kOperationalError;
}

}  // namespace medbridge::cli
