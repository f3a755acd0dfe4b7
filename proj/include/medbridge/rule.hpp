#pragma once

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace medbridge {

// Boolean expression tree over proposition ids. Precedence NOT > AND > OR,
// AND/OR left-associative. Immutable; nodes are shared between copies.
class RuleExpr {
  public:
    enum class Kind { Atom, Not, And, Or };

    static RuleExpr atom(std::string prop_id);
    static RuleExpr negate(RuleExpr e);
    static RuleExpr conj(RuleExpr lhs, RuleExpr rhs);
    static RuleExpr disj(RuleExpr lhs, RuleExpr rhs);

    Kind kind() const { return node_->kind; }
    const std::string& prop() const { return node_->prop; }  // Atom only
    const RuleExpr& lhs() const { return node_->children[0]; }
    const RuleExpr& rhs() const { return node_->children[1]; }
    const RuleExpr& operand() const { return node_->children[0]; }  // Not only

    // Atom ids appearing anywhere in the expression.
    void collect_atoms(std::set<std::string>& out) const;
    // Atom ids appearing under an odd or even number of negations below a NOT.
    void collect_negated_atoms(std::set<std::string>& out, bool under_not = false) const;

    bool operator==(const RuleExpr& other) const;

  private:
    struct Node {
        Kind kind;
        std::string prop;
        std::vector<RuleExpr> children;
    };
    explicit RuleExpr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

struct Rule {
    std::string id;  // manifest-assigned; empty for ad-hoc parses
    RuleExpr antecedent = RuleExpr::atom("");
    std::string consequent;
    double weight = 1.0;
    std::string source;  // provenance: file:line, citation, expert note

    bool operator==(const Rule& other) const;
};

// Syntax error with the byte offset into the input and the token classes
// that would have been accepted there.
struct RuleSyntaxError : std::runtime_error {
    RuleSyntaxError(std::size_t at, std::vector<std::string> expect, const std::string& found);
    std::size_t offset;
    std::vector<std::string> expected;
};

struct RuleWeightError : std::runtime_error {
    RuleWeightError(std::size_t at, double w);
    std::size_t offset;
    double weight;
};

// One syntax/weight error per offending line, aggregated over a rule file.
struct RuleFileError : std::runtime_error {
    explicit RuleFileError(std::vector<std::pair<int, std::string>> errs);
    std::vector<std::pair<int, std::string>> line_errors;  // (line, message)
};

// Parses a single rule: `expr => consequent [w=0.x]`.
Rule parse_rule(std::string_view text);

// Parses expression syntax alone (no implication); used by tests.
RuleExpr parse_expr(std::string_view text);

// One rule per non-comment line; `#` starts a comment. Collects every bad
// line before failing. Rule.source begins as "<path>:<line>".
std::vector<Rule> parse_rule_file(const std::string& path);

// Canonical text form; `render(parse(text))` reparses to an equal tree.
std::string render(const RuleExpr& expr);
std::string render(const Rule& rule);

}  // namespace medbridge
