#include "medbridge/fuzzy.hpp"

#include <algorithm>
#include <set>

#include "medbridge/kb.hpp"

namespace medbridge {

double MembershipCurve::evaluate(double x) const {
    if (breakpoints.empty()) return 0.0;
    if (x <= breakpoints.front().first) return breakpoints.front().second;
    if (x >= breakpoints.back().first) return breakpoints.back().second;
    for (std::size_t i = 1; i < breakpoints.size(); ++i) {
        const auto& [x1, y1] = breakpoints[i];
        if (x > x1) continue;
        const auto& [x0, y0] = breakpoints[i - 1];
        const double t = (x - x0) / (x1 - x0);
        return y0 + t * (y1 - y0);
    }
    return breakpoints.back().second;
}

EvidenceSet apply_curves(const std::vector<MembershipCurve>& curves, const EvidenceSet& evidence) {
    std::set<std::string> seen;
    for (const auto& c : curves) {
        if (!seen.insert(c.observation).second)
            throw FuzzyError("duplicate curve for observation '" + c.observation + "'");
    }
    EvidenceSet out = evidence;
    for (const auto& c : curves) {
        auto it = evidence.raw_observations.find(c.observation);
        if (it == evidence.raw_observations.end()) continue;
        // Curve output lands on the proposition named like the observation;
        // an explicit base degree for it wins.
        out.base_degrees.emplace(c.observation, c.evaluate(it->second));
    }
    return out;
}

double eval_expr(const RuleExpr& expr, const DegreeAssignment& assignment) {
    switch (expr.kind()) {
        case RuleExpr::Kind::Atom: {
            auto it = assignment.degrees.find(expr.prop());
            return it == assignment.degrees.end() ? 0.0 : it->second;
        }
        case RuleExpr::Kind::Not:
            return 1.0 - eval_expr(expr.operand(), assignment);
        case RuleExpr::Kind::And:
            return std::min(eval_expr(expr.lhs(), assignment), eval_expr(expr.rhs(), assignment));
        case RuleExpr::Kind::Or:
            return std::max(eval_expr(expr.lhs(), assignment), eval_expr(expr.rhs(), assignment));
    }
    return 0.0;
}

int round_bound(const std::vector<Rule>& rules, const EvidenceSet& evidence,
                std::size_t proposition_count) {
    std::set<double> values{0.0, 1.0};
    for (const auto& [prop, d] : evidence.base_degrees) {
        values.insert(d);
        values.insert(1.0 - d);
    }
    for (const auto& r : rules) values.insert(r.weight);
    return static_cast<int>(proposition_count * values.size()) + 1;
}

ChainResult forward_chain(const std::vector<Rule>& rules,
                          const std::vector<std::string>& propositions,
                          const EvidenceSet& evidence) {
    // Stratification: negated atoms must not be derivable.
    std::set<std::string> consequents;
    for (const auto& r : rules) consequents.insert(r.consequent);
    for (const auto& r : rules) {
        std::set<std::string> negated;
        r.antecedent.collect_negated_atoms(negated);
        for (const auto& atom : negated) {
            if (consequents.count(atom))
                throw StratificationError("negated atom '" + atom +
                                          "' is also a rule consequent");
        }
    }

    ChainResult result;
    auto& degrees = result.assignment.degrees;
    auto& derivation = result.assignment.derivation;
    for (const auto& p : propositions) degrees[p] = 0.0;
    for (const auto& r : rules) {
        degrees.emplace(r.consequent, 0.0);
        std::set<std::string> atoms;
        r.antecedent.collect_atoms(atoms);
        for (const auto& a : atoms) degrees.emplace(a, 0.0);
    }
    for (const auto& [prop, d] : evidence.base_degrees) {
        degrees[prop] = d;
        derivation[prop] = "evidence";
    }

    const int bound = round_bound(rules, evidence, degrees.size());
    bool changed = true;
    while (changed) {
        changed = false;
        ++result.rounds;
        if (result.rounds > bound)
            throw FuzzyError("forward chaining exceeded its round bound");  // unreachable
        for (const auto& r : rules) {
            const double fired = std::min(r.weight, eval_expr(r.antecedent, result.assignment));
            auto it = degrees.find(r.consequent);
            if (it == degrees.end()) it = degrees.emplace(r.consequent, 0.0).first;
            if (fired > it->second) {
                it->second = fired;
                derivation[r.consequent] = r.id.empty() ? render(r) : r.id;
                changed = true;
            }
        }
    }
    return result;
}

ChainResult forward_chain(const KnowledgeBase& kb, const EvidenceSet& evidence) {
    std::vector<std::string> props;
    props.reserve(kb.propositions.size());
    for (const auto& p : kb.propositions) props.push_back(p.id);
    return forward_chain(kb.rules, props, evidence);
}

}  // namespace medbridge
