#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "medbridge/rule.hpp"

using namespace medbridge;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = std::string("/tmp/medbridge_rule_") + name;
    std::ofstream out(path, std::ios::trunc);
    out << content;
    return path;
}

// Independent random expression generator for the round-trip property.
RuleExpr random_expr(std::mt19937& rng, int depth) {
    const std::vector<std::string> idents = {"a", "b", "c", "damp_heat", "tongue_yellow", "x9"};
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 0 : 3);
    switch (pick(rng)) {
        case 1:
            return RuleExpr::negate(random_expr(rng, depth - 1));
        case 2:
            return RuleExpr::conj(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
        case 3:
            return RuleExpr::disj(random_expr(rng, depth - 1), random_expr(rng, depth - 1));
        default: {
            std::uniform_int_distribution<std::size_t> i(0, idents.size() - 1);
            return RuleExpr::atom(idents[i(rng)]);
        }
    }
}

}  // namespace

TEST_CASE("worked rule from the diagnostic schema") {
    const Rule r = parse_rule("damp_heat AND tongue_yellow => liver_syndrome");
    CHECK(r.consequent == "liver_syndrome");
    CHECK(r.weight == 1.0);
    REQUIRE(r.antecedent.kind() == RuleExpr::Kind::And);
    CHECK(r.antecedent.lhs().prop() == "damp_heat");
    CHECK(r.antecedent.rhs().prop() == "tongue_yellow");
}

TEST_CASE("minimal rule") {
    const Rule r = parse_rule("a => b");
    CHECK(r.antecedent == RuleExpr::atom("a"));
    CHECK(r.consequent == "b");
    CHECK(r.weight == 1.0);
}

TEST_CASE("precedence NOT > AND > OR with weight suffix") {
    const Rule r = parse_rule("NOT a AND b OR c => d [w=0.9]");
    const RuleExpr expected = RuleExpr::disj(
        RuleExpr::conj(RuleExpr::negate(RuleExpr::atom("a")), RuleExpr::atom("b")),
        RuleExpr::atom("c"));
    CHECK(r.antecedent == expected);
    CHECK(r.consequent == "d");
    CHECK(r.weight == doctest::Approx(0.9));
}

TEST_CASE("parentheses override precedence") {
    const RuleExpr e = parse_expr("NOT (a AND b)");
    REQUIRE(e.kind() == RuleExpr::Kind::Not);
    CHECK(e.operand().kind() == RuleExpr::Kind::And);

    const RuleExpr f = parse_expr("a AND (b OR c)");
    REQUIRE(f.kind() == RuleExpr::Kind::And);
    CHECK(f.rhs().kind() == RuleExpr::Kind::Or);
}

TEST_CASE("AND/OR are left-associative") {
    const RuleExpr e = parse_expr("a AND b AND c");
    REQUIRE(e.kind() == RuleExpr::Kind::And);
    CHECK(e.lhs().kind() == RuleExpr::Kind::And);
    CHECK(e.rhs().prop() == "c");
}

TEST_CASE("syntax errors carry byte offsets and expected tokens") {
    try {
        parse_rule("a AND => b");
        FAIL("expected a syntax error");
    } catch (const RuleSyntaxError& e) {
        CHECK(e.offset == 6);
        CHECK(!e.expected.empty());
    }
    CHECK_THROWS_AS(parse_rule("a b => c"), RuleSyntaxError);
    CHECK_THROWS_AS(parse_rule("=> c"), RuleSyntaxError);
    CHECK_THROWS_AS(parse_rule("a => b AND c"), RuleSyntaxError);  // compound consequent
    CHECK_THROWS_AS(parse_rule("a => b [w=oops]"), RuleSyntaxError);
    CHECK_THROWS_AS(parse_rule("a"), RuleSyntaxError);             // missing implication
}

TEST_CASE("weight out of range is its own error") {
    CHECK_THROWS_AS(parse_rule("a => b [w=1.5]"), RuleWeightError);
    CHECK_THROWS_AS(parse_rule("a => b [w=-0.1]"), RuleWeightError);
    CHECK(parse_rule("a => b [w=0]").weight == 0.0);
    CHECK(parse_rule("a => b [w=1]").weight == 1.0);
}

TEST_CASE("rule file: comments, line numbers, aggregated errors") {
    const std::string good = write_temp("good.rules",
                                        "# liver schema\n"
                                        "damp_heat AND tongue_yellow => liver_syndrome [w=0.9]\n"
                                        "\n"
                                        "tongue_yellow => damp_heat\n");
    const auto rules = parse_rule_file(good);
    REQUIRE(rules.size() == 2);
    CHECK(rules[0].source == good + ":2");
    CHECK(rules[1].source == good + ":4");

    const std::string bad = write_temp("bad.rules",
                                       "a => b\n"
                                       "c => d\n"
                                       "e AND => f\n");
    try {
        parse_rule_file(bad);
        FAIL("expected RuleFileError");
    } catch (const RuleFileError& e) {
        REQUIRE(e.line_errors.size() == 1);
        CHECK(e.line_errors[0].first == 3);
    }

    const std::string two_bad = write_temp("two_bad.rules", "x =>\ny => z [w=7]\n");
    try {
        parse_rule_file(two_bad);
        FAIL("expected RuleFileError");
    } catch (const RuleFileError& e) {
        CHECK(e.line_errors.size() == 2);  // all errors reported, not just the first
    }
}

TEST_CASE("render/parse round trip on 100 random rules") {
    std::mt19937 rng(20240811);
    for (int i = 0; i < 100; ++i) {
        Rule r;
        r.antecedent = random_expr(rng, 4);
        r.consequent = "target";
        r.weight = (i % 3 == 0) ? 0.25 + 0.5 * (i % 7) / 7.0 : 1.0;
        const std::string text = render(r);
        const Rule back = parse_rule(text);
        CHECK(back == r);
        CHECK(render(back) == text);  // render . parse . render = render
    }
}

TEST_CASE("parser survives random junk with located errors, never crashes") {
    std::mt19937 rng(13);
    const std::string alphabet = "ab =>()[]wNOTANDOR_0.5#\t";
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::uniform_int_distribution<int> len(0, 24);
    int parsed_ok = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        std::string junk;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) junk.push_back(alphabet[pick(rng)]);
        try {
            (void)parse_rule(junk);
            ++parsed_ok;  // random strings occasionally form valid rules
        } catch (const RuleSyntaxError& e) {
            CHECK(e.offset <= junk.size());
        } catch (const RuleWeightError&) {
        }
    }
    CHECK(parsed_ok < 2000);
}

TEST_CASE("rendering inserts parentheses only where required") {
    CHECK(render(parse_expr("a AND b OR c")) == "a AND b OR c");
    CHECK(render(parse_expr("(a OR b) AND c")) == "(a OR b) AND c");
    CHECK(render(parse_expr("NOT (a OR b)")) == "NOT (a OR b)");
    CHECK(render(parse_expr("a AND (b AND c)")) == "a AND (b AND c)");
    CHECK(render(parse_rule("a=>b [w=0.5]")) == "a => b [w=0.5]");
}
