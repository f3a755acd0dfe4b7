#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace medbridge {

enum class NodeRole { TCM, WM, Bridge };

struct BayesNode {
    std::string id;
    std::vector<std::string> states;   // >= 2, unique
    std::vector<std::string> parents;  // ordered; CPT rows follow this order
    NodeRole role = NodeRole::WM;
    // Which state counts as "present" for bridging decisions; manifest data.
    std::optional<std::string> present_state;

    int state_index(const std::string& state) const;  // -1 if unknown
};

// Conditional probability table, flattened row-major over parent states:
// row index = mixed-radix number of parent state indices (first parent is
// the most significant digit); each row is a distribution over the node's
// states.
struct Cpt {
    std::string node;
    std::vector<double> table;

    std::size_t row_count(std::size_t node_card) const { return table.size() / node_card; }
};

struct BayesError : std::runtime_error {
    explicit BayesError(const std::string& msg) : std::runtime_error(msg) {}
};

// Evidence that has probability zero under the model; distinct from any
// numerical failure so callers can tell "impossible" from "uninformative".
struct InconsistentEvidenceError : BayesError {
    explicit InconsistentEvidenceError(const std::string& msg) : BayesError(msg) {}
};

using Assignment = std::map<std::string, std::string>;  // node id -> state name

class BayesNet {
  public:
    BayesNet() = default;

    void add_node(BayesNode node);
    void set_cpt(Cpt cpt);  // validates shape, nonnegativity, row sums

    bool has_node(const std::string& id) const { return index_.count(id) != 0; }
    const BayesNode& node(const std::string& id) const;
    const Cpt& cpt(const std::string& id) const;
    std::vector<std::string> node_ids() const;  // insertion order
    std::size_t size() const { return nodes_.size(); }

    // Empty when acyclic and fully parameterized; otherwise one message per
    // problem. Does not throw.
    std::vector<std::string> structural_problems() const;

    // Topological order; throws BayesError on a cycle.
    std::vector<std::string> topo_order() const;

  private:
    std::vector<BayesNode> nodes_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, Cpt> cpts_;
};

// Chain-rule product over all CPT entries; the assignment must cover every
// node with a valid state.
double joint_probability(const BayesNet& net, const Assignment& assignment);

// Exact posterior over the query node's states by variable elimination with
// a min-degree order (ties broken by node id). Throws
// InconsistentEvidenceError when the evidence has zero probability.
std::vector<double> posterior(const BayesNet& net, const std::string& query,
                              const Assignment& evidence);

// Same elimination machinery with a caller-chosen order; used to check that
// the order does not affect results.
std::vector<double> posterior_with_order(const BayesNet& net, const std::string& query,
                                         const Assignment& evidence,
                                         const std::vector<std::string>& elimination_order);

// P(evidence) by eliminating everything.
double evidence_probability(const BayesNet& net, const Assignment& evidence);

// Records may omit nodes (missing = unobserved). Used by learn_em.
using Record = std::map<std::string, std::string>;

std::vector<Record> load_records(const std::string& path);

// Maximum-likelihood CPT estimation with additive smoothing:
// entry = (count + alpha) / (parent_total + alpha * |states|).
// With alpha = 0 and an unseen parent configuration, the row is uniform and
// a warning is appended.
BayesNet learn_ml(const BayesNet& structure, const std::vector<Record>& data, double alpha,
                  std::vector<std::string>* warnings = nullptr);

struct EmResult {
    BayesNet net;
    double log_likelihood = 0.0;
    int iterations = 0;
    std::vector<double> ll_trace;  // log-likelihood after each iteration
};

struct EmOptions {
    int max_iters = 50;
    double tol = 1e-6;
    double alpha = 0.0;      // smoothing applied in each M-step
    std::uint64_t seed = 0;  // CPT initialization
};

// Expectation-maximization over records with missing entries. E-step uses
// exact family posteriors; M-step as in learn_ml. Stops when the
// log-likelihood improvement over the previous iteration falls below tol.
EmResult learn_em(const BayesNet& structure, const std::vector<Record>& data,
                  const EmOptions& opts);

}  // namespace medbridge
