#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "medbridge/rule.hpp"

namespace medbridge {

struct KnowledgeBase;

struct FuzzyError : std::runtime_error {
    explicit FuzzyError(const std::string& msg) : std::runtime_error(msg) {}
};

// A negated atom that is also some rule's consequent; the fixpoint would be
// ill-defined, so chaining refuses to start.
struct StratificationError : FuzzyError {
    explicit StratificationError(const std::string& msg) : FuzzyError(msg) {}
};

struct EvidenceSet {
    std::map<std::string, double> base_degrees;      // proposition id -> [0,1]
    std::map<std::string, double> raw_observations;  // observation id -> measurement
};

// Piecewise-linear map from a raw observation to a membership degree.
struct MembershipCurve {
    std::string observation;
    std::vector<std::pair<double, double>> breakpoints;  // x strictly increasing, mu in [0,1]

    double evaluate(double x) const;  // clamps outside the breakpoint range
};

struct DegreeAssignment {
    std::map<std::string, double> degrees;
    std::map<std::string, std::string> derivation;  // rule id or "evidence"
};

// Converts raw observations to base degrees; degrees already present are
// kept (explicit degrees win over derived ones for the same proposition).
// Curves map observation ids onto proposition ids one-to-one.
EvidenceSet apply_curves(const std::vector<MembershipCurve>& curves, const EvidenceSet& evidence);

// Goedel/Mamdani semantics: AND=min, OR=max, NOT x = 1-x. Atoms absent from
// the assignment read as degree 0.
double eval_expr(const RuleExpr& expr, const DegreeAssignment& assignment);

struct ChainResult {
    DegreeAssignment assignment;
    int rounds = 0;
};

// Least fixpoint of weighted forward chaining:
//   degree(consequent) = max over rules of min(weight, eval(antecedent)),
// with evidence degrees as floors. Throws StratificationError when a negated
// atom is some rule's consequent.
ChainResult forward_chain(const KnowledgeBase& kb, const EvidenceSet& evidence);
ChainResult forward_chain(const std::vector<Rule>& rules,
                          const std::vector<std::string>& propositions,
                          const EvidenceSet& evidence);

// Upper bound on sweep count implied by the finite degree value set; the
// chaining loop asserts it, tests check it independently.
int round_bound(const std::vector<Rule>& rules, const EvidenceSet& evidence,
                std::size_t proposition_count);

}  // namespace medbridge
