#include "medbridge/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "medbridge/common.hpp"
#include "medbridge/jsonl.hpp"

namespace medbridge {

int BayesNode::state_index(const std::string& state) const {
    for (std::size_t i = 0; i < states.size(); ++i)
        if (states[i] == state) return static_cast<int>(i);
    return -1;
}

void BayesNet::add_node(BayesNode node) {
    if (node.states.size() < 2)
        throw BayesError("node '" + node.id + "' needs at least 2 states");
    std::set<std::string> uniq(node.states.begin(), node.states.end());
    if (uniq.size() != node.states.size())
        throw BayesError("node '" + node.id + "' has duplicate states");
    if (index_.count(node.id)) throw BayesError("duplicate node id '" + node.id + "'");
    index_[node.id] = nodes_.size();
    nodes_.push_back(std::move(node));
}

void BayesNet::set_cpt(Cpt cpt) {
    const BayesNode& n = node(cpt.node);
    std::size_t rows = 1;
    for (const auto& p : n.parents) {
        if (!has_node(p))
            throw BayesError("CPT for '" + cpt.node + "' references unknown parent '" + p + "'");
        rows *= node(p).states.size();
    }
    if (cpt.table.size() != rows * n.states.size())
        throw BayesError("CPT for '" + cpt.node + "' has " + std::to_string(cpt.table.size()) +
                         " entries, expected " + std::to_string(rows * n.states.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t s = 0; s < n.states.size(); ++s) {
            const double v = cpt.table[r * n.states.size() + s];
            if (v < 0.0)
                throw BayesError("CPT for '" + cpt.node + "' has a negative entry");
            sum += v;
        }
        if (std::fabs(sum - 1.0) > kProbEps)
            throw BayesError("CPT row " + std::to_string(r) + " for '" + cpt.node +
                             "' sums to " + std::to_string(sum));
    }
    cpts_[cpt.node] = std::move(cpt);
}

const BayesNode& BayesNet::node(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw BayesError("unknown node '" + id + "'");
    return nodes_[it->second];
}

const Cpt& BayesNet::cpt(const std::string& id) const {
    auto it = cpts_.find(id);
    if (it == cpts_.end()) throw BayesError("node '" + id + "' has no CPT");
    return it->second;
}

std::vector<std::string> BayesNet::node_ids() const {
    std::vector<std::string> ids;
    ids.reserve(nodes_.size());
    for (const auto& n : nodes_) ids.push_back(n.id);
    return ids;
}

std::vector<std::string> BayesNet::structural_problems() const {
    std::vector<std::string> problems;
    for (const auto& n : nodes_) {
        for (const auto& p : n.parents)
            if (!index_.count(p))
                problems.push_back("node '" + n.id + "' references missing parent '" + p + "'");
        if (!cpts_.count(n.id)) problems.push_back("node '" + n.id + "' has no CPT");
    }
    try {
        topo_order();
    } catch (const BayesError& e) {
        problems.push_back(e.what());
    }
    return problems;
}

std::vector<std::string> BayesNet::topo_order() const {
    std::map<std::string, int> indegree;
    std::map<std::string, std::vector<std::string>> children;
    for (const auto& n : nodes_) indegree[n.id] = 0;
    for (const auto& n : nodes_) {
        for (const auto& p : n.parents) {
            if (!index_.count(p)) continue;  // reported by structural_problems
            ++indegree[n.id];
            children[p].push_back(n.id);
        }
    }
    // Ordered set gives a deterministic topological order.
    std::set<std::string> ready;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) ready.insert(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        const std::string id = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(id);
        for (const auto& c : children[id])
            if (--indegree[c] == 0) ready.insert(c);
    }
    if (order.size() != nodes_.size()) throw BayesError("graph has a cycle");
    return order;
}

namespace {

// Multi-variable factor over named discrete variables, row-major with the
// first variable most significant.
struct Factor {
    std::vector<std::string> vars;
    std::vector<std::size_t> card;
    std::vector<double> vals;

    std::size_t var_pos(const std::string& v) const {
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i] == v) return i;
        return vars.size();
    }
};

std::size_t flat_size(const std::vector<std::size_t>& card) {
    std::size_t n = 1;
    for (auto c : card) n *= c;
    return n;
}

Factor multiply(const Factor& a, const Factor& b) {
    Factor out;
    out.vars = a.vars;
    out.card = a.card;
    for (std::size_t i = 0; i < b.vars.size(); ++i) {
        if (out.var_pos(b.vars[i]) == out.vars.size()) {
            out.vars.push_back(b.vars[i]);
            out.card.push_back(b.card[i]);
        }
    }
    out.vals.assign(flat_size(out.card), 0.0);

    // Each operand's flat index walks that operand's own variable order.
    std::vector<std::size_t> a_src(a.vars.size()), b_src(b.vars.size());
    for (std::size_t i = 0; i < a.vars.size(); ++i) a_src[i] = out.var_pos(a.vars[i]);
    for (std::size_t i = 0; i < b.vars.size(); ++i) b_src[i] = out.var_pos(b.vars[i]);

    std::vector<std::size_t> idx(out.vars.size(), 0);
    for (std::size_t flat = 0; flat < out.vals.size(); ++flat) {
        std::size_t ai = 0, bi = 0;
        for (std::size_t i = 0; i < a.vars.size(); ++i) ai = ai * a.card[i] + idx[a_src[i]];
        for (std::size_t i = 0; i < b.vars.size(); ++i) bi = bi * b.card[i] + idx[b_src[i]];
        out.vals[flat] = a.vals.empty() ? 1.0 : a.vals[ai];
        out.vals[flat] *= b.vals.empty() ? 1.0 : b.vals[bi];
        for (std::size_t i = out.vars.size(); i-- > 0;) {
            if (++idx[i] < out.card[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

Factor sum_out(const Factor& f, const std::string& var) {
    const std::size_t pos = f.var_pos(var);
    if (pos == f.vars.size()) return f;
    Factor out;
    for (std::size_t i = 0; i < f.vars.size(); ++i) {
        if (i == pos) continue;
        out.vars.push_back(f.vars[i]);
        out.card.push_back(f.card[i]);
    }
    out.vals.assign(flat_size(out.card), 0.0);

    std::vector<std::size_t> idx(f.vars.size(), 0);
    for (std::size_t flat = 0; flat < f.vals.size(); ++flat) {
        std::size_t oi = 0;
        for (std::size_t i = 0; i < f.vars.size(); ++i)
            if (i != pos) oi = oi * f.card[i] + idx[i];
        out.vals[oi] += f.vals[flat];
        for (std::size_t i = f.vars.size(); i-- > 0;) {
            if (++idx[i] < f.card[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

Factor restrict_var(const Factor& f, const std::string& var, std::size_t state) {
    const std::size_t pos = f.var_pos(var);
    if (pos == f.vars.size()) return f;
    Factor out;
    for (std::size_t i = 0; i < f.vars.size(); ++i) {
        if (i == pos) continue;
        out.vars.push_back(f.vars[i]);
        out.card.push_back(f.card[i]);
    }
    out.vals.assign(flat_size(out.card), 0.0);

    std::vector<std::size_t> idx(f.vars.size(), 0);
    for (std::size_t flat = 0; flat < f.vals.size(); ++flat) {
        if (idx[pos] == state) {
            std::size_t oi = 0;
            for (std::size_t i = 0; i < f.vars.size(); ++i)
                if (i != pos) oi = oi * f.card[i] + idx[i];
            out.vals[oi] = f.vals[flat];
        }
        for (std::size_t i = f.vars.size(); i-- > 0;) {
            if (++idx[i] < f.card[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

Factor cpt_factor(const BayesNet& net, const std::string& node_id) {
    const BayesNode& n = net.node(node_id);
    Factor f;
    for (const auto& p : n.parents) {
        f.vars.push_back(p);
        f.card.push_back(net.node(p).states.size());
    }
    f.vars.push_back(n.id);
    f.card.push_back(n.states.size());
    f.vals = net.cpt(node_id).table;
    return f;
}

std::size_t checked_state(const BayesNet& net, const std::string& node_id,
                          const std::string& state) {
    const int s = net.node(node_id).state_index(state);
    if (s < 0)
        throw BayesError("unknown state '" + state + "' for node '" + node_id + "'");
    return static_cast<std::size_t>(s);
}

// Eliminates `to_eliminate` (in the given order) from the evidence-restricted
// factor product and returns the product of what remains.
Factor eliminate(const BayesNet& net, const Assignment& evidence,
                 const std::vector<std::string>& to_eliminate) {
    std::vector<Factor> factors;
    for (const auto& id : net.node_ids()) {
        Factor f = cpt_factor(net, id);
        for (const auto& [ev_node, ev_state] : evidence)
            f = restrict_var(f, ev_node, checked_state(net, ev_node, ev_state));
        factors.push_back(std::move(f));
    }
    for (const auto& var : to_eliminate) {
        Factor combined;
        combined.vals = {1.0};
        std::vector<Factor> rest;
        bool touched = false;
        for (auto& f : factors) {
            if (f.var_pos(var) != f.vars.size()) {
                combined = multiply(combined, f);
                touched = true;
            } else {
                rest.push_back(std::move(f));
            }
        }
        if (touched) rest.push_back(sum_out(combined, var));
        factors = std::move(rest);
    }
    Factor result;
    result.vals = {1.0};
    for (const auto& f : factors) result = multiply(result, f);
    return result;
}

// Min-degree elimination order over the moralized evidence-restricted graph,
// deterministic tie-break by node id.
std::vector<std::string> min_degree_order(const BayesNet& net, const Assignment& evidence,
                                          const std::string& query) {
    std::map<std::string, std::set<std::string>> adj;
    std::set<std::string> active;
    for (const auto& id : net.node_ids())
        if (id != query && !evidence.count(id)) active.insert(id);

    auto connect = [&](const std::vector<std::string>& scope) {
        for (const auto& a : scope) {
            if (!active.count(a)) continue;
            for (const auto& b : scope) {
                if (a == b || !active.count(b)) continue;
                adj[a].insert(b);
            }
        }
    };
    for (const auto& id : net.node_ids()) {
        std::vector<std::string> scope = net.node(id).parents;
        scope.push_back(id);
        connect(scope);
    }

    std::vector<std::string> order;
    while (!active.empty()) {
        std::string best;
        std::size_t best_deg = SIZE_MAX;
        for (const auto& v : active) {
            const std::size_t deg = adj[v].size();
            if (deg < best_deg || (deg == best_deg && v < best)) {
                best = v;
                best_deg = deg;
            }
        }
        // Fill-in: neighbors of the eliminated variable become a clique.
        std::vector<std::string> nbrs(adj[best].begin(), adj[best].end());
        connect(nbrs);
        for (const auto& nb : nbrs) adj[nb].erase(best);
        adj.erase(best);
        active.erase(best);
        order.push_back(best);
    }
    return order;
}

std::vector<double> finish_posterior(const BayesNet& net, const std::string& query,
                                     Factor result) {
    const BayesNode& qn = net.node(query);
    // The remaining product has at most the query variable in scope.
    std::vector<double> vec(qn.states.size(), 0.0);
    if (result.vars.empty()) {
        throw BayesError("internal: query eliminated");
    }
    const std::size_t pos = result.var_pos(query);
    if (pos == result.vars.size() || result.vars.size() != 1)
        throw BayesError("internal: unexpected residual scope");
    for (std::size_t s = 0; s < vec.size(); ++s) vec[s] = result.vals[s];
    double z = 0.0;
    for (double v : vec) z += v;
    if (!(z > 0.0))
        throw InconsistentEvidenceError("evidence has probability zero under the model");
    for (auto& v : vec) v /= z;
    return vec;
}

}  // namespace

double joint_probability(const BayesNet& net, const Assignment& assignment) {
    double p = 1.0;
    for (const auto& id : net.node_ids()) {
        const BayesNode& n = net.node(id);
        auto it = assignment.find(id);
        if (it == assignment.end())
            throw BayesError("assignment missing node '" + id + "'");
        const std::size_t s = checked_state(net, id, it->second);
        std::size_t row = 0;
        for (const auto& par : n.parents) {
            auto pit = assignment.find(par);
            if (pit == assignment.end())
                throw BayesError("assignment missing node '" + par + "'");
            row = row * net.node(par).states.size() + checked_state(net, par, pit->second);
        }
        p *= net.cpt(id).table[row * n.states.size() + s];
    }
    return p;
}

std::vector<double> posterior(const BayesNet& net, const std::string& query,
                              const Assignment& evidence) {
    if (evidence.count(query)) throw BayesError("query node '" + query + "' is in the evidence");
    (void)net.node(query);
    const auto order = min_degree_order(net, evidence, query);
    return finish_posterior(net, query, eliminate(net, evidence, order));
}

std::vector<double> posterior_with_order(const BayesNet& net, const std::string& query,
                                         const Assignment& evidence,
                                         const std::vector<std::string>& elimination_order) {
    if (evidence.count(query)) throw BayesError("query node '" + query + "' is in the evidence");
    for (const auto& v : elimination_order)
        if (v == query) throw BayesError("elimination order contains the query");
    return finish_posterior(net, query, eliminate(net, evidence, elimination_order));
}

double evidence_probability(const BayesNet& net, const Assignment& evidence) {
    std::vector<std::string> order;
    for (const auto& id : net.node_ids())
        if (!evidence.count(id)) order.push_back(id);
    std::sort(order.begin(), order.end());
    Factor result = eliminate(net, evidence, order);
    double z = 0.0;
    for (double v : result.vals) z += v;
    return z;
}

std::vector<Record> load_records(const std::string& path) {
    std::vector<Record> records;
    jsonl::for_each_record(path, [&](const nlohmann::json& rec, int line) {
        Record r;
        for (auto it = rec.begin(); it != rec.end(); ++it) {
            if (it.value().is_null()) continue;
            if (!it.value().is_string())
                throw SchemaError("record values must be state names or null", line);
            r[it.key()] = it.value().get<std::string>();
        }
        records.push_back(std::move(r));
    });
    return records;
}

namespace {

struct CountTable {
    // counts[row * card + state]
    std::vector<double> counts;
    std::size_t card = 0;
};

std::size_t parent_row(const BayesNet& net, const BayesNode& n, const Record& rec) {
    std::size_t row = 0;
    for (const auto& par : n.parents) {
        auto it = rec.find(par);
        if (it == rec.end()) throw BayesError("record missing node '" + par + "'");
        row = row * net.node(par).states.size() + checked_state(net, par, it->second);
    }
    return row;
}

BayesNet net_from_counts(const BayesNet& structure,
                         const std::map<std::string, CountTable>& counts, double alpha,
                         std::vector<std::string>* warnings) {
    BayesNet out;
    for (const auto& id : structure.node_ids()) out.add_node(structure.node(id));
    for (const auto& id : structure.node_ids()) {
        const BayesNode& n = structure.node(id);
        const CountTable& ct = counts.at(id);
        const std::size_t k = n.states.size();
        Cpt cpt;
        cpt.node = id;
        cpt.table.assign(ct.counts.size(), 0.0);
        const std::size_t rows = ct.counts.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
            double row_total = 0.0;
            for (std::size_t s = 0; s < k; ++s) row_total += ct.counts[r * k + s];
            const double denom = row_total + alpha * static_cast<double>(k);
            if (denom <= 0.0) {
                for (std::size_t s = 0; s < k; ++s)
                    cpt.table[r * k + s] = 1.0 / static_cast<double>(k);
                if (warnings)
                    warnings->push_back("node '" + id + "' row " + std::to_string(r) +
                                        ": no observations, emitting uniform distribution");
            } else {
                for (std::size_t s = 0; s < k; ++s)
                    cpt.table[r * k + s] = (ct.counts[r * k + s] + alpha) / denom;
            }
        }
        out.set_cpt(std::move(cpt));
    }
    return out;
}

std::map<std::string, CountTable> empty_counts(const BayesNet& structure) {
    std::map<std::string, CountTable> counts;
    for (const auto& id : structure.node_ids()) {
        const BayesNode& n = structure.node(id);
        std::size_t rows = 1;
        for (const auto& p : n.parents) rows *= structure.node(p).states.size();
        CountTable ct;
        ct.card = n.states.size();
        ct.counts.assign(rows * n.states.size(), 0.0);
        counts[id] = std::move(ct);
    }
    return counts;
}

// Posterior over the family (node + parents) given the observed part of a
// record, as a factor whose scope lists unobserved family members only.
Factor family_posterior(const BayesNet& net, const std::vector<std::string>& family,
                        const Record& observed) {
    Assignment evidence;
    for (const auto& [node, state] : observed) evidence[node] = state;
    std::set<std::string> family_set(family.begin(), family.end());
    std::vector<std::string> order;
    for (const auto& id : net.node_ids())
        if (!evidence.count(id) && !family_set.count(id)) order.push_back(id);
    std::sort(order.begin(), order.end());
    Factor result = eliminate(net, evidence, order);
    double z = 0.0;
    for (double v : result.vals) z += v;
    if (!(z > 0.0))
        throw InconsistentEvidenceError("record has probability zero under current parameters");
    for (auto& v : result.vals) v /= z;
    return result;
}

double dataset_log_likelihood(const BayesNet& net, const std::vector<Record>& data) {
    double ll = 0.0;
    for (const auto& rec : data) {
        Assignment ev(rec.begin(), rec.end());
        const double p = evidence_probability(net, ev);
        if (!(p > 0.0))
            throw InconsistentEvidenceError("record has probability zero under current parameters");
        ll += std::log(p);
    }
    return ll;
}

}  // namespace

BayesNet learn_ml(const BayesNet& structure, const std::vector<Record>& data, double alpha,
                  std::vector<std::string>* warnings) {
    if (alpha < 0.0) throw BayesError("alpha must be >= 0");
    auto counts = empty_counts(structure);
    for (const auto& rec : data) {
        for (const auto& id : structure.node_ids()) {
            const BayesNode& n = structure.node(id);
            auto it = rec.find(id);
            if (it == rec.end()) throw BayesError("record missing node '" + id + "'");
            const std::size_t s = checked_state(structure, id, it->second);
            const std::size_t row = parent_row(structure, n, rec);
            counts[id].counts[row * n.states.size() + s] += 1.0;
        }
    }
    return net_from_counts(structure, counts, alpha, warnings);
}

EmResult learn_em(const BayesNet& structure, const std::vector<Record>& data,
                  const EmOptions& opts) {
    if (opts.max_iters < 1) throw BayesError("max_iters must be >= 1");
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].empty())
            throw BayesError("record " + std::to_string(i) + " observes no node at all");
        for (const auto& [node, state] : data[i]) (void)checked_state(structure, node, state);
    }

    // Seeded positive random rows break symmetry deterministically.
    BayesNet current;
    {
        for (const auto& id : structure.node_ids()) current.add_node(structure.node(id));
        std::uint64_t s = opts.seed * 0x9E3779B97F4A7C15ULL + 0xC0FFEEULL;
        auto next = [&s]() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            return static_cast<double>(s >> 11) * 0x1.0p-53;
        };
        for (const auto& id : structure.node_ids()) {
            const BayesNode& n = structure.node(id);
            std::size_t rows = 1;
            for (const auto& p : n.parents) rows *= structure.node(p).states.size();
            Cpt cpt;
            cpt.node = id;
            cpt.table.assign(rows * n.states.size(), 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                double total = 0.0;
                for (std::size_t k = 0; k < n.states.size(); ++k) {
                    const double v = 0.25 + next();  // bounded away from zero
                    cpt.table[r * n.states.size() + k] = v;
                    total += v;
                }
                for (std::size_t k = 0; k < n.states.size(); ++k)
                    cpt.table[r * n.states.size() + k] /= total;
            }
            current.set_cpt(std::move(cpt));
        }
    }

    EmResult result;
    double prev_ll = dataset_log_likelihood(current, data);
    for (int iter = 1; iter <= opts.max_iters; ++iter) {
        // E-step: expected family counts under current parameters.
        auto counts = empty_counts(structure);
        for (const auto& rec : data) {
            for (const auto& id : structure.node_ids()) {
                const BayesNode& n = structure.node(id);
                std::vector<std::string> family = n.parents;
                family.push_back(id);
                Factor post = family_posterior(current, family, rec);

                // Walk every completion of the family; observed members are
                // pinned, unobserved ones range over the posterior's scope.
                std::vector<std::size_t> idx(post.vars.size(), 0);
                const std::size_t total = post.vals.empty() ? 1 : post.vals.size();
                for (std::size_t flat = 0; flat < total; ++flat) {
                    const double w = post.vals.empty() ? 1.0 : post.vals[flat];
                    if (w > 0.0) {
                        Record completed = rec;
                        for (std::size_t i = 0; i < post.vars.size(); ++i)
                            completed[post.vars[i]] =
                                structure.node(post.vars[i]).states[idx[i]];
                        const std::size_t s =
                            checked_state(structure, id, completed.at(id));
                        const std::size_t row = parent_row(structure, n, completed);
                        counts[id].counts[row * n.states.size() + s] += w;
                    }
                    for (std::size_t i = post.vars.size(); i-- > 0;) {
                        if (++idx[i] < post.card[i]) break;
                        idx[i] = 0;
                    }
                }
            }
        }
        // M-step.
        current = net_from_counts(structure, counts, opts.alpha, nullptr);
        const double ll = dataset_log_likelihood(current, data);
        result.ll_trace.push_back(ll);
        result.iterations = iter;
        const double improvement = ll - prev_ll;
        prev_ll = ll;
        if (improvement < opts.tol) break;
    }
    result.net = std::move(current);
    result.log_likelihood = prev_ll;
    return result;
}

}  // namespace medbridge
