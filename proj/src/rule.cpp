#include "medbridge/rule.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "medbridge/common.hpp"

namespace medbridge {

RuleExpr RuleExpr::atom(std::string prop_id) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Atom;
    n->prop = std::move(prop_id);
    return RuleExpr(std::move(n));
}

RuleExpr RuleExpr::negate(RuleExpr e) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Not;
    n->children.push_back(std::move(e));
    return RuleExpr(std::move(n));
}

RuleExpr RuleExpr::conj(RuleExpr lhs, RuleExpr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::And;
    n->children.push_back(std::move(lhs));
    n->children.push_back(std::move(rhs));
    return RuleExpr(std::move(n));
}

RuleExpr RuleExpr::disj(RuleExpr lhs, RuleExpr rhs) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Or;
    n->children.push_back(std::move(lhs));
    n->children.push_back(std::move(rhs));
    return RuleExpr(std::move(n));
}

void RuleExpr::collect_atoms(std::set<std::string>& out) const {
    if (kind() == Kind::Atom) {
        out.insert(prop());
        return;
    }
    for (const auto& c : node_->children) c.collect_atoms(out);
}

void RuleExpr::collect_negated_atoms(std::set<std::string>& out, bool under_not) const {
    switch (kind()) {
        case Kind::Atom:
            if (under_not) out.insert(prop());
            return;
        case Kind::Not:
            operand().collect_negated_atoms(out, true);
            return;
        default:
            for (const auto& c : node_->children) c.collect_negated_atoms(out, under_not);
    }
}

bool RuleExpr::operator==(const RuleExpr& other) const {
    if (node_ == other.node_) return true;
    if (kind() != other.kind()) return false;
    if (kind() == Kind::Atom) return prop() == other.prop();
    if (node_->children.size() != other.node_->children.size()) return false;
    for (std::size_t i = 0; i < node_->children.size(); ++i)
        if (!(node_->children[i] == other.node_->children[i])) return false;
    return true;
}

bool Rule::operator==(const Rule& other) const {
    return antecedent == other.antecedent && consequent == other.consequent &&
           weight == other.weight;
}

RuleSyntaxError::RuleSyntaxError(std::size_t at, std::vector<std::string> expect,
                                 const std::string& found)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "syntax error at offset " << at << ": expected ";
          for (std::size_t i = 0; i < expect.size(); ++i)
              os << (i ? " | " : "") << expect[i];
          os << ", found " << found;
          return os.str();
      }()),
      offset(at),
      expected(std::move(expect)) {}

RuleWeightError::RuleWeightError(std::size_t at, double w)
    : std::runtime_error("weight out of range [0,1] at offset " + std::to_string(at) + ": " +
                         std::to_string(w)),
      offset(at),
      weight(w) {}

RuleFileError::RuleFileError(std::vector<std::pair<int, std::string>> errs)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << errs.size() << " rule error(s):";
          for (const auto& [line, msg] : errs) os << "\n  line " << line << ": " << msg;
          return os.str();
      }()),
      line_errors(std::move(errs)) {}

namespace {

struct Token {
    enum class Type { Ident, Not, And, Or, Implies, LParen, RParen, LBracket, End };
    Type type;
    std::string text;
    std::size_t offset;
};

class Lexer {
  public:
    explicit Lexer(std::string_view s) : s_(s) {}

    Token next() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        const std::size_t at = pos_;
        if (pos_ >= s_.size()) return {Token::Type::End, "", at};
        const char c = s_[pos_];
        if (c == '(') return ++pos_, Token{Token::Type::LParen, "(", at};
        if (c == ')') return ++pos_, Token{Token::Type::RParen, ")", at};
        if (c == '[') return ++pos_, Token{Token::Type::LBracket, "[", at};
        if (c == '=' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '>')
            return pos_ += 2, Token{Token::Type::Implies, "=>", at};
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t end = pos_;
            while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) ||
                                       s_[end] == '_'))
                ++end;
            std::string word(s_.substr(pos_, end - pos_));
            pos_ = end;
            if (word == "NOT") return {Token::Type::Not, word, at};
            if (word == "AND") return {Token::Type::And, word, at};
            if (word == "OR") return {Token::Type::Or, word, at};
            return {Token::Type::Ident, word, at};
        }
        throw RuleSyntaxError(at, {"identifier", "NOT", "(", "=>"},
                              "'" + std::string(1, c) + "'");
    }

    std::string_view rest_from(std::size_t off) const { return s_.substr(off); }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

  private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

// Grammar (EBNF, see docs/formats.md):
//   rule   = expr "=>" ident [ "[" "w" "=" number "]" ]
//   expr   = and { "OR" and }
//   and    = unary { "AND" unary }
//   unary  = "NOT" unary | ident | "(" expr ")"
class Parser {
  public:
    explicit Parser(std::string_view s) : lex_(s), input_(s) { advance(); }

    RuleExpr expr() {
        RuleExpr e = conj();
        while (cur_.type == Token::Type::Or) {
            advance();
            e = RuleExpr::disj(std::move(e), conj());
        }
        return e;
    }

    Rule rule() {
        Rule r;
        r.antecedent = expr();
        expect(Token::Type::Implies, "=>");
        r.consequent = expect(Token::Type::Ident, "identifier").text;
        if (cur_.type == Token::Type::LBracket) r.weight = weight_suffix();
        end("end of rule");
        return r;
    }

    void end(const char* what) {
        if (cur_.type != Token::Type::End)
            throw RuleSyntaxError(cur_.offset, {what}, describe(cur_));
    }

  private:
    RuleExpr conj() {
        RuleExpr e = unary();
        while (cur_.type == Token::Type::And) {
            advance();
            e = RuleExpr::conj(std::move(e), unary());
        }
        return e;
    }

    RuleExpr unary() {
        if (cur_.type == Token::Type::Not) {
            advance();
            return RuleExpr::negate(unary());
        }
        if (cur_.type == Token::Type::Ident) {
            std::string id = cur_.text;
            advance();
            return RuleExpr::atom(std::move(id));
        }
        if (cur_.type == Token::Type::LParen) {
            advance();
            RuleExpr e = expr();
            expect(Token::Type::RParen, ")");
            return e;
        }
        throw RuleSyntaxError(cur_.offset, {"identifier", "NOT", "("}, describe(cur_));
    }

    // Trailing `[w=NUMBER]`; cur_ sits on '['.
    double weight_suffix() {
        const std::size_t open_at = cur_.offset;
        std::string_view rest = input_.substr(open_at);
        std::size_t i = 1;  // past '['
        auto skip_ws = [&] {
            while (i < rest.size() && std::isspace(static_cast<unsigned char>(rest[i]))) ++i;
        };
        skip_ws();
        if (i >= rest.size() || rest[i] != 'w')
            throw RuleSyntaxError(open_at + i, {"w"}, "end or other");
        ++i;
        skip_ws();
        if (i >= rest.size() || rest[i] != '=')
            throw RuleSyntaxError(open_at + i, {"="}, "end or other");
        ++i;
        skip_ws();
        double w = 0.0;
        const char* first = rest.data() + i;
        const char* last = rest.data() + rest.size();
        auto [ptr, ec] = std::from_chars(first, last, w);
        if (ec != std::errc())
            throw RuleSyntaxError(open_at + i, {"number"}, "non-numeric");
        i += static_cast<std::size_t>(ptr - first);
        skip_ws();
        if (i >= rest.size() || rest[i] != ']')
            throw RuleSyntaxError(open_at + i, {"]"}, "end or other");
        ++i;
        if (w < 0.0 || w > 1.0) throw RuleWeightError(open_at, w);
        lex_.seek(open_at + i);
        advance();
        return w;
    }

    Token expect(Token::Type t, const char* what) {
        if (cur_.type != t) throw RuleSyntaxError(cur_.offset, {what}, describe(cur_));
        Token tok = cur_;
        advance();
        return tok;
    }

    static std::string describe(const Token& t) {
        return t.type == Token::Type::End ? "end of input" : "'" + t.text + "'";
    }

    void advance() { cur_ = lex_.next(); }

    Lexer lex_;
    std::string_view input_;
    Token cur_{Token::Type::End, "", 0};
};

int precedence(RuleExpr::Kind k) {
    switch (k) {
        case RuleExpr::Kind::Or: return 1;
        case RuleExpr::Kind::And: return 2;
        case RuleExpr::Kind::Not: return 3;
        default: return 4;
    }
}

void render_into(const RuleExpr& e, std::string& out, int parent_prec) {
    const int prec = precedence(e.kind());
    const bool parens = prec < parent_prec;
    if (parens) out += '(';
    switch (e.kind()) {
        case RuleExpr::Kind::Atom:
            out += e.prop();
            break;
        case RuleExpr::Kind::Not:
            out += "NOT ";
            render_into(e.operand(), out, prec + 1);
            break;
        case RuleExpr::Kind::And:
            render_into(e.lhs(), out, prec);
            out += " AND ";
            render_into(e.rhs(), out, prec + 1);  // left-assoc: parenthesize right AND-chains
            break;
        case RuleExpr::Kind::Or:
            render_into(e.lhs(), out, prec);
            out += " OR ";
            render_into(e.rhs(), out, prec + 1);
            break;
    }
    if (parens) out += ')';
}

std::string format_weight(double w) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), w);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

Rule parse_rule(std::string_view text) {
    Parser p(text);
    return p.rule();
}

RuleExpr parse_expr(std::string_view text) {
    Parser p(text);
    RuleExpr e = p.expr();
    p.end("end of expression");
    return e;
}

std::vector<Rule> parse_rule_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open rule file: " + path);
    std::vector<Rule> rules;
    std::vector<std::pair<int, std::string>> errors;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            Rule r = parse_rule(line);
            r.source = path + ":" + std::to_string(line_no);
            rules.push_back(std::move(r));
        } catch (const std::runtime_error& e) {
            errors.emplace_back(line_no, e.what());
        }
    }
    if (!errors.empty()) throw RuleFileError(std::move(errors));
    return rules;
}

std::string render(const RuleExpr& expr) {
    std::string out;
    render_into(expr, out, 0);
    return out;
}

std::string render(const Rule& rule) {
    std::string out = render(rule.antecedent);
    out += " => ";
    out += rule.consequent;
    if (rule.weight != 1.0) {
        out += " [w=";
        out += format_weight(rule.weight);
        out += ']';
    }
    return out;
}

}  // namespace medbridge
