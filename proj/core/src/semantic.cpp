#include "gera/semantic.hpp"

#include <algorithm>
#include <cctype>

namespace gera::semantic {

// ---- lexer -----------------------------------------------------------------

namespace {

struct Token {
    enum class Kind { Ident, Str, Num, Punct, End };
    Kind kind = Kind::End;
    std::string text;
    std::size_t line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_ws();
            Token t;
            t.line = line_;
            t.col = col_;
            if (eof()) {
                t.kind = Token::Kind::End;
                out.push_back(t);
                return out;
            }
            char c = peek();
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Token::Kind::Ident;
                while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) ||
                                  peek() == '_')) {
                    t.text.push_back(next());
                }
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-') {
                t.kind = Token::Kind::Num;
                t.text.push_back(next());
                while (!eof() && (std::isdigit(static_cast<unsigned char>(peek())) ||
                                  peek() == '.')) {
                    t.text.push_back(next());
                }
                if (t.text == "-") {
                    throw ParseError(ParseError::Category::Lexical, t.line, t.col,
                                     "stray '-' is not a number");
                }
            } else if (c == '"') {
                t.kind = Token::Kind::Str;
                next();
                while (true) {
                    if (eof()) {
                        throw ParseError(ParseError::Category::Lexical, t.line, t.col,
                                         "unterminated string literal");
                    }
                    char s = next();
                    if (s == '"') break;
                    if (s == '\\') {
                        if (eof()) {
                            throw ParseError(ParseError::Category::Lexical, t.line, t.col,
                                             "unterminated escape in string literal");
                        }
                        char esc = next();
                        if (esc == '"' || esc == '\\') {
                            t.text.push_back(esc);
                        } else {
                            throw ParseError(ParseError::Category::Lexical, line_, col_,
                                             std::string("unsupported escape \\") + esc);
                        }
                    } else {
                        t.text.push_back(s);
                    }
                }
            } else if (c == '!' || c == '<' || c == '>') {
                t.kind = Token::Kind::Punct;
                t.text.push_back(next());
                if (!eof() && peek() == '=') t.text.push_back(next());
                if (t.text == "!") {
                    throw ParseError(ParseError::Category::Lexical, t.line, t.col,
                                     "stray '!'; use != or 'not'");
                }
            } else if (std::string("{}():;,=").find(c) != std::string::npos) {
                t.kind = Token::Kind::Punct;
                t.text.push_back(next());
            } else {
                throw ParseError(ParseError::Category::Lexical, line_, col_,
                                 std::string("unexpected character '") + c + "'");
            }
            out.push_back(std::move(t));
        }
    }

private:
    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }
    char next() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    void skip_ws() {
        while (!eof()) {
            char c = peek();
            if (c == '#') {  // line comment
                while (!eof() && peek() != '\n') next();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                next();
            } else {
                break;
            }
        }
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1, col_ = 1;
};

}  // namespace

ParseError::ParseError(Category cat, std::size_t line_, std::size_t col_, const std::string& msg,
                       std::vector<std::string> expected_)
    : ValidationError([&] {
          std::string categories[] = {"lexical error", "syntax error", "type error"};
          std::string full = categories[static_cast<int>(cat)] + " at " + std::to_string(line_) +
                             ":" + std::to_string(col_) + ": " + msg;
          if (!expected_.empty()) {
              full += " (expected ";
              for (std::size_t i = 0; i < expected_.size(); ++i) {
                  if (i) full += ", ";
                  full += expected_[i];
              }
              full += ")";
          }
          return full;
      }()),
      category(cat),
      line(line_),
      col(col_),
      expected(std::move(expected_)) {}

// ---- parser ----------------------------------------------------------------

namespace {

class Parser {
public:
    Parser(std::vector<Token> tokens, std::string location)
        : tokens_(std::move(tokens)), location_(std::move(location)) {}

    std::vector<MetricDefinition> parse_file(std::string_view text) {
        std::vector<MetricDefinition> defs;
        while (!at_end()) {
            defs.push_back(parse_metric(text));
        }
        if (defs.empty()) {
            syntax("no metric definitions found", {"metric"});
        }
        return defs;
    }

private:
    const Token& cur() const { return tokens_[pos_]; }
    bool at_end() const { return cur().kind == Token::Kind::End; }

    [[noreturn]] void syntax(const std::string& msg, std::vector<std::string> expected = {}) {
        throw ParseError(ParseError::Category::Syntax, cur().line, cur().col, msg,
                         std::move(expected));
    }

    Token expect_ident(const std::string& what) {
        if (cur().kind != Token::Kind::Ident) {
            syntax("expected " + what, {"identifier"});
        }
        return tokens_[pos_++];
    }

    Token expect_keyword(const std::string& kw) {
        if (cur().kind != Token::Kind::Ident || cur().text != kw) {
            syntax("expected '" + kw + "', found '" + cur().text + "'", {kw});
        }
        return tokens_[pos_++];
    }

    Token expect_punct(const std::string& p) {
        if (cur().kind != Token::Kind::Punct || cur().text != p) {
            syntax("expected '" + p + "', found '" + cur().text + "'", {p});
        }
        return tokens_[pos_++];
    }

    bool accept_punct(const std::string& p) {
        if (cur().kind == Token::Kind::Punct && cur().text == p) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool peek_keyword(const std::string& kw) const {
        return cur().kind == Token::Kind::Ident && cur().text == kw;
    }

    MetricDefinition parse_metric(std::string_view text) {
        std::size_t start_offset_line = cur().line;
        expect_keyword("metric");
        MetricDefinition def;
        def.location = location_ + ":" + std::to_string(start_offset_line);
        def.name = expect_ident("metric name").text;
        expect_punct("{");
        bool have_source = false, have_agg = false;
        while (!accept_punct("}")) {
            if (at_end()) syntax("unterminated metric block", {"}"});
            Token clause = expect_ident("clause keyword");
            expect_punct(":");
            if (clause.text == "source") {
                def.source = expect_ident("source name").text;
                have_source = true;
            } else if (clause.text == "filter") {
                def.filter = parse_expr();
            } else if (clause.text == "agg") {
                def.agg = parse_agg();
                have_agg = true;
            } else if (clause.text == "grain") {
                def.grain.push_back(expect_ident("grain field").text);
                while (accept_punct(",")) {
                    def.grain.push_back(expect_ident("grain field").text);
                }
            } else {
                throw ParseError(ParseError::Category::Syntax, clause.line, clause.col,
                                 "unknown clause '" + clause.text + "'",
                                 {"source", "filter", "agg", "grain"});
            }
            if (!accept_punct(";")) {
                if (!(cur().kind == Token::Kind::Punct && cur().text == "}")) {
                    syntax("expected ';' or '}' after clause", {";", "}"});
                }
            }
        }
        if (!have_source) {
            throw ParseError(ParseError::Category::Syntax, start_offset_line, 1,
                             "metric " + def.name + " has no source clause", {"source"});
        }
        if (!have_agg) {
            throw ParseError(ParseError::Category::Syntax, start_offset_line, 1,
                             "metric " + def.name + " has no agg clause", {"agg"});
        }
        // definition digest covers the canonical printed text, so formatting
        // differences do not spuriously change versions
        def.version = sha256_hex(print_metric(def));
        (void)text;
        return def;
    }

    Aggregation parse_agg() {
        Aggregation agg;
        Token t = expect_ident("aggregation");
        if (t.text == "count") {
            agg.kind = Aggregation::Kind::Count;
        } else if (t.text == "count_distinct") {
            agg.kind = Aggregation::Kind::CountDistinct;
            expect_punct("(");
            agg.field = expect_ident("field").text;
            expect_punct(")");
        } else if (t.text == "sum") {
            agg.kind = Aggregation::Kind::Sum;
            expect_punct("(");
            agg.field = expect_ident("field").text;
            expect_punct(")");
        } else if (t.text == "ratio") {
            agg.kind = Aggregation::Kind::Ratio;
            expect_punct("(");
            agg.numerator = expect_ident("metric name").text;
            expect_punct(",");
            agg.denominator = expect_ident("metric name").text;
            expect_punct(")");
        } else {
            throw ParseError(ParseError::Category::Syntax, t.line, t.col,
                             "unknown aggregation '" + t.text + "'",
                             {"count", "count_distinct", "sum", "ratio"});
        }
        return agg;
    }

    std::unique_ptr<Expr> parse_expr() { return parse_or(); }

    std::unique_ptr<Expr> parse_or() {
        auto first = parse_and();
        if (!peek_keyword("or")) return first;
        auto node = std::make_unique<Expr>();
        node->kind = Expr::Kind::Or;
        node->children.push_back(std::move(first));
        while (peek_keyword("or")) {
            ++pos_;
            node->children.push_back(parse_and());
        }
        return node;
    }

    std::unique_ptr<Expr> parse_and() {
        auto first = parse_unary();
        if (!peek_keyword("and")) return first;
        auto node = std::make_unique<Expr>();
        node->kind = Expr::Kind::And;
        node->children.push_back(std::move(first));
        while (peek_keyword("and")) {
            ++pos_;
            node->children.push_back(parse_unary());
        }
        return node;
    }

    std::unique_ptr<Expr> parse_unary() {
        if (peek_keyword("not")) {
            ++pos_;
            auto node = std::make_unique<Expr>();
            node->kind = Expr::Kind::Not;
            node->children.push_back(parse_unary());
            return node;
        }
        if (accept_punct("(")) {
            auto inner = parse_expr();
            expect_punct(")");
            return inner;
        }
        return parse_comparison();
    }

    Literal parse_literal() {
        Literal lit;
        if (cur().kind == Token::Kind::Str) {
            lit.kind = Literal::Kind::Str;
            lit.text = cur().text;
            ++pos_;
            return lit;
        }
        if (cur().kind == Token::Kind::Num) {
            lit.kind = Literal::Kind::Num;
            auto d = Decimal::parse(cur().text);
            if (!d) {
                throw ParseError(ParseError::Category::Lexical, cur().line, cur().col,
                                 "malformed number '" + cur().text + "'");
            }
            lit.num = *d;
            lit.text = d->to_string();
            ++pos_;
            return lit;
        }
        syntax("expected literal", {"string", "number"});
    }

    std::unique_ptr<Expr> parse_comparison() {
        Token field = expect_ident("field name");
        auto node = std::make_unique<Expr>();
        node->field = field.text;
        if (peek_keyword("in")) {
            ++pos_;
            node->kind = Expr::Kind::InList;
            expect_punct("(");
            node->list.push_back(parse_literal());
            while (accept_punct(",")) {
                node->list.push_back(parse_literal());
            }
            expect_punct(")");
            return node;
        }
        static const std::vector<std::string> ops = {"=", "!=", "<=", ">=", "<", ">"};
        if (cur().kind == Token::Kind::Punct &&
            std::find(ops.begin(), ops.end(), cur().text) != ops.end()) {
            node->kind = Expr::Kind::Compare;
            node->op = cur().text;
            ++pos_;
            node->value = parse_literal();
            return node;
        }
        node->kind = Expr::Kind::FieldTruth;
        return node;
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::string location_;
};

}  // namespace

std::vector<MetricDefinition> parse_metrics(std::string_view text, const std::string& location) {
    Lexer lexer(text);
    Parser parser(lexer.run(), location);
    return parser.parse_file(text);
}

// ---- printing and equality --------------------------------------------------

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string print_literal(const Literal& lit) {
    return lit.kind == Literal::Kind::Str ? quote(lit.text) : lit.text;
}

std::string print_expr(const Expr* e, int parent_level);

// levels: 0 = or, 1 = and, 2 = unary/atom
int level_of(const Expr* e) {
    switch (e->kind) {
        case Expr::Kind::Or:
            return 0;
        case Expr::Kind::And:
            return 1;
        default:
            return 2;
    }
}

std::string print_expr(const Expr* e, int parent_level) {
    std::string out;
    switch (e->kind) {
        case Expr::Kind::Or:
        case Expr::Kind::And: {
            const char* sep = e->kind == Expr::Kind::Or ? " or " : " and ";
            for (std::size_t i = 0; i < e->children.size(); ++i) {
                if (i) out += sep;
                out += print_expr(e->children[i].get(), level_of(e) + 1);
            }
            if (level_of(e) < parent_level) out = "(" + out + ")";
            break;
        }
        case Expr::Kind::Not:
            out = "not " + print_expr(e->children[0].get(), 2);
            break;
        case Expr::Kind::Compare:
            out = e->field + " " + e->op + " " + print_literal(e->value);
            break;
        case Expr::Kind::InList: {
            out = e->field + " in (";
            for (std::size_t i = 0; i < e->list.size(); ++i) {
                if (i) out += ", ";
                out += print_literal(e->list[i]);
            }
            out += ")";
            break;
        }
        case Expr::Kind::FieldTruth:
            out = e->field;
            break;
    }
    return out;
}

}  // namespace

bool Expr::equal(const Expr* a, const Expr* b) {
    if (a == nullptr || b == nullptr) return a == b;
    if (a->kind != b->kind || a->op != b->op || a->field != b->field) return false;
    if (!(a->value == b->value)) return false;
    if (a->list != b->list) return false;
    if (a->children.size() != b->children.size()) return false;
    for (std::size_t i = 0; i < a->children.size(); ++i) {
        if (!equal(a->children[i].get(), b->children[i].get())) return false;
    }
    return true;
}

bool MetricDefinition::ast_equals(const MetricDefinition& o) const {
    return name == o.name && source == o.source && agg == o.agg && grain == o.grain &&
           Expr::equal(filter.get(), o.filter.get());
}

std::string print_metric(const MetricDefinition& def) {
    std::string out = "metric " + def.name + " {\n";
    out += "  source: " + def.source + ";\n";
    if (def.filter) {
        out += "  filter: " + print_expr(def.filter.get(), 0) + ";\n";
    }
    out += "  agg: ";
    switch (def.agg.kind) {
        case Aggregation::Kind::Count:
            out += "count";
            break;
        case Aggregation::Kind::CountDistinct:
            out += "count_distinct(" + def.agg.field + ")";
            break;
        case Aggregation::Kind::Sum:
            out += "sum(" + def.agg.field + ")";
            break;
        case Aggregation::Kind::Ratio:
            out += "ratio(" + def.agg.numerator + ", " + def.agg.denominator + ")";
            break;
    }
    out += ";\n";
    if (!def.grain.empty()) {
        out += "  grain: ";
        for (std::size_t i = 0; i < def.grain.size(); ++i) {
            if (i) out += ", ";
            out += def.grain[i];
        }
        out += ";\n";
    }
    out += "}\n";
    return out;
}

// ---- catalog ----------------------------------------------------------------

SourceCatalog SourceCatalog::from_json(const Json& j, const staging::SchemaCatalog& schemas) {
    SourceCatalog cat;
    for (const auto& [name, sj] : j.at("sources").items()) {
        SourceSchema s;
        s.name = name;
        s.kind = sj.at("kind").get<std::string>();
        if (s.kind == "staged") {
            s.entity = sj.at("entity").get<std::string>();
            auto it = schemas.entities.find(s.entity);
            if (it == schemas.entities.end()) {
                throw ConfigError("catalog source " + name + " references unknown entity \"" +
                                  s.entity + "\"");
            }
            s.field_types = it->second.field_types;
        } else if (s.kind == "model") {
            for (const auto& [f, t] : sj.at("fields").items()) {
                s.field_types[f] = t.get<std::string>();
            }
        } else {
            throw ConfigError("catalog source " + name + ": unknown kind \"" + s.kind + "\"");
        }
        cat.sources[name] = std::move(s);
    }
    return cat;
}

const SourceSchema* SourceCatalog::find(const std::string& name) const {
    auto it = sources.find(name);
    return it == sources.end() ? nullptr : &it->second;
}

// ---- validation ---------------------------------------------------------------

namespace {

void check_expr_types(const Expr* e, const SourceSchema& source, const std::string& metric,
                      std::vector<std::string>& errors) {
    if (!e) return;
    auto field_type = [&](const std::string& f) -> std::optional<std::string> {
        auto it = source.field_types.find(f);
        if (it == source.field_types.end()) return std::nullopt;
        return it->second;
    };
    switch (e->kind) {
        case Expr::Kind::And:
        case Expr::Kind::Or:
        case Expr::Kind::Not:
            for (const auto& c : e->children) {
                check_expr_types(c.get(), source, metric, errors);
            }
            break;
        case Expr::Kind::FieldTruth: {
            auto t = field_type(e->field);
            if (!t) {
                errors.push_back(metric + ": unknown field \"" + e->field + "\" in source " +
                                 source.name);
            } else if (*t != "bool") {
                errors.push_back(metric + ": field \"" + e->field +
                                 "\" used as a boolean but has type " + *t);
            }
            break;
        }
        case Expr::Kind::Compare:
        case Expr::Kind::InList: {
            auto t = field_type(e->field);
            if (!t) {
                errors.push_back(metric + ": unknown field \"" + e->field + "\" in source " +
                                 source.name);
                break;
            }
            std::vector<const Literal*> lits;
            if (e->kind == Expr::Kind::Compare) {
                lits.push_back(&e->value);
            } else {
                for (const auto& l : e->list) lits.push_back(&l);
            }
            for (const auto* lit : lits) {
                bool ok = true;
                if (*t == "number") {
                    ok = lit->kind == Literal::Kind::Num;
                } else if (*t == "date") {
                    ok = lit->kind == Literal::Kind::Str &&
                         Date::parse_iso(lit->text).has_value();
                } else if (*t == "bool") {
                    ok = lit->kind == Literal::Kind::Str &&
                         (lit->text == "true" || lit->text == "false");
                } else {
                    ok = lit->kind == Literal::Kind::Str;
                }
                if (!ok) {
                    errors.push_back(metric + ": field \"" + e->field + "\" of type " + *t +
                                     " compared against incompatible literal " +
                                     print_literal(*lit));
                }
            }
            bool ordered = e->op == "<" || e->op == "<=" || e->op == ">" || e->op == ">=";
            if (ordered && *t != "number" && *t != "date") {
                errors.push_back(metric + ": ordered comparison on field \"" + e->field +
                                 "\" of type " + *t);
            }
            break;
        }
    }
}

}  // namespace

Registry Registry::validate(std::vector<MetricDefinition> defs, const SourceCatalog& catalog) {
    std::vector<std::string> errors;

    std::map<std::string, std::string> seen;  // name -> location
    for (const auto& d : defs) {
        auto [it, inserted] = seen.emplace(d.name, d.location);
        if (!inserted) {
            errors.push_back("duplicate metric name \"" + d.name + "\" defined at " + it->second +
                             " and " + d.location);
        }
    }

    std::map<std::string, const MetricDefinition*> by_name;
    for (const auto& d : defs) by_name[d.name] = &d;

    for (const auto& d : defs) {
        if (d.agg.kind == Aggregation::Kind::Ratio) {
            for (const auto& ref : {d.agg.numerator, d.agg.denominator}) {
                if (!by_name.count(ref)) {
                    errors.push_back(d.name + ": ratio references unknown metric \"" + ref + "\"");
                }
            }
            if (!d.grain.empty()) {
                errors.push_back(d.name + ": ratio metrics do not support grain");
            }
            if (!d.source.empty() && d.source != "none") {
                // ratio pulls rows through its components; source is informational
            }
            continue;
        }
        const auto* src = catalog.find(d.source);
        if (!src) {
            errors.push_back(d.name + ": unknown source \"" + d.source + "\"");
            continue;
        }
        check_expr_types(d.filter.get(), *src, d.name, errors);
        if (d.agg.kind == Aggregation::Kind::Sum) {
            auto it = src->field_types.find(d.agg.field);
            if (it == src->field_types.end()) {
                errors.push_back(d.name + ": sum over unknown field \"" + d.agg.field + "\"");
            } else if (it->second != "number") {
                errors.push_back(d.name + ": sum over non-numeric field \"" + d.agg.field +
                                 "\" of type " + it->second);
            }
        }
        if (d.agg.kind == Aggregation::Kind::CountDistinct &&
            !src->field_types.count(d.agg.field)) {
            errors.push_back(d.name + ": count_distinct over unknown field \"" + d.agg.field +
                             "\"");
        }
        for (const auto& g : d.grain) {
            if (!src->field_types.count(g)) {
                errors.push_back(d.name + ": grain references unknown field \"" + g + "\"");
            }
        }
    }

    // ratio graph must be acyclic
    std::map<std::string, int> mark;  // 0 unvisited, 1 in-progress, 2 done
    std::function<bool(const std::string&)> dfs = [&](const std::string& name) {
        auto it = by_name.find(name);
        if (it == by_name.end()) return true;
        int& m = mark[name];
        if (m == 1) {
            errors.push_back("cycle in ratio references involving \"" + name + "\"");
            return false;
        }
        if (m == 2) return true;
        m = 1;
        if (it->second->agg.kind == Aggregation::Kind::Ratio) {
            if (!dfs(it->second->agg.numerator)) return false;
            if (!dfs(it->second->agg.denominator)) return false;
        }
        m = 2;
        return true;
    };
    for (const auto& d : defs) {
        if (!dfs(d.name)) break;
    }

    if (!errors.empty()) {
        std::string msg = "metric registry validation failed:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }

    Registry reg;
    reg.catalog_ = catalog;
    std::sort(defs.begin(), defs.end(),
              [](const MetricDefinition& a, const MetricDefinition& b) { return a.name < b.name; });
    reg.defs_ = std::move(defs);
    for (std::size_t i = 0; i < reg.defs_.size(); ++i) {
        reg.index_[reg.defs_[i].name] = i;
    }
    return reg;
}

const MetricDefinition& Registry::metric(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown metric \"" + name + "\"");
    return defs_[it->second];
}

std::vector<std::string> Registry::names() const {
    std::vector<std::string> out;
    out.reserve(defs_.size());
    for (const auto& d : defs_) out.push_back(d.name);
    return out;
}

LineageTrace Registry::lineage(const std::string& name) const {
    LineageTrace trace;
    trace.metric = name;
    std::set<std::string> sources;
    std::function<void(const std::string&)> walk = [&](const std::string& m) {
        const auto& def = metric(m);
        if (def.agg.kind == Aggregation::Kind::Ratio) {
            walk(def.agg.numerator);
            walk(def.agg.denominator);
            trace.component_metrics.push_back(m);
        } else {
            if (sources.insert(def.source).second) trace.sources.push_back(def.source);
            if (m != name) trace.component_metrics.push_back(m);
        }
    };
    walk(name);
    if (!trace.component_metrics.empty() && trace.component_metrics.back() == name) {
        trace.component_metrics.pop_back();
    }
    return trace;
}

// ---- evaluation -----------------------------------------------------------------

namespace {

enum class Tri { True, False, Unknown };

Tri tri_not(Tri t) {
    if (t == Tri::Unknown) return Tri::Unknown;
    return t == Tri::True ? Tri::False : Tri::True;
}

std::string row_value(const Row& row, const std::string& field) {
    auto it = row.find(field);
    return it == row.end() ? "" : it->second;
}

Tri compare_typed(const std::string& type, const std::string& raw, const std::string& op,
                  const Literal& lit) {
    if (raw.empty()) return Tri::Unknown;
    int cmp = 0;
    if (type == "number") {
        auto v = Decimal::parse(raw);
        if (!v) return Tri::Unknown;
        cmp = *v < lit.num ? -1 : (*v == lit.num ? 0 : 1);
    } else if (type == "date") {
        auto v = Date::parse_iso(raw);
        auto w = Date::parse_iso(lit.text);
        if (!v || !w) return Tri::Unknown;
        cmp = *v < *w ? -1 : (*v == *w ? 0 : 1);
    } else if (type == "bool") {
        std::string lowered = to_lower(raw);
        bool truthy = lowered == "true" || lowered == "1" || lowered == "yes";
        bool target = lit.text == "true";
        cmp = truthy == target ? 0 : 1;
    } else {
        cmp = raw.compare(lit.text) < 0 ? -1 : (raw == lit.text ? 0 : 1);
    }
    bool result;
    if (op == "=") {
        result = cmp == 0;
    } else if (op == "!=") {
        result = cmp != 0;
    } else if (op == "<") {
        result = cmp < 0;
    } else if (op == "<=") {
        result = cmp <= 0;
    } else if (op == ">") {
        result = cmp > 0;
    } else {
        result = cmp >= 0;
    }
    return result ? Tri::True : Tri::False;
}

Tri eval_expr(const Expr* e, const Row& row, const SourceSchema& source) {
    switch (e->kind) {
        case Expr::Kind::And: {
            Tri acc = Tri::True;
            for (const auto& c : e->children) {
                Tri t = eval_expr(c.get(), row, source);
                if (t == Tri::False) return Tri::False;
                if (t == Tri::Unknown) acc = Tri::Unknown;
            }
            return acc;
        }
        case Expr::Kind::Or: {
            Tri acc = Tri::False;
            for (const auto& c : e->children) {
                Tri t = eval_expr(c.get(), row, source);
                if (t == Tri::True) return Tri::True;
                if (t == Tri::Unknown) acc = Tri::Unknown;
            }
            return acc;
        }
        case Expr::Kind::Not:
            return tri_not(eval_expr(e->children[0].get(), row, source));
        case Expr::Kind::FieldTruth: {
            std::string raw = row_value(row, e->field);
            if (raw.empty()) return Tri::Unknown;
            std::string lowered = to_lower(raw);
            return (lowered == "true" || lowered == "1" || lowered == "yes") ? Tri::True
                                                                             : Tri::False;
        }
        case Expr::Kind::Compare: {
            auto it = source.field_types.find(e->field);
            std::string type = it == source.field_types.end() ? "string" : it->second;
            return compare_typed(type, row_value(row, e->field), e->op, e->value);
        }
        case Expr::Kind::InList: {
            auto it = source.field_types.find(e->field);
            std::string type = it == source.field_types.end() ? "string" : it->second;
            std::string raw = row_value(row, e->field);
            if (raw.empty()) return Tri::Unknown;
            for (const auto& lit : e->list) {
                if (compare_typed(type, raw, "=", lit) == Tri::True) return Tri::True;
            }
            return Tri::False;
        }
    }
    return Tri::Unknown;
}

Value aggregate_rows(const MetricDefinition& def, const std::vector<const Row*>& rows) {
    Value v;
    switch (def.agg.kind) {
        case Aggregation::Kind::Count:
            v.kind = Value::Kind::Count;
            v.count = static_cast<std::int64_t>(rows.size());
            break;
        case Aggregation::Kind::CountDistinct: {
            std::set<std::string> distinct;
            for (const auto* r : rows) {
                auto val = row_value(*r, def.agg.field);
                if (!val.empty()) distinct.insert(val);
            }
            v.kind = Value::Kind::Count;
            v.count = static_cast<std::int64_t>(distinct.size());
            break;
        }
        case Aggregation::Kind::Sum: {
            v.kind = Value::Kind::Sum;
            for (const auto* r : rows) {
                auto d = Decimal::parse(row_value(*r, def.agg.field));
                if (d) v.sum += *d;  // nulls do not contribute
            }
            break;
        }
        case Aggregation::Kind::Ratio:
            break;  // handled by the caller
    }
    return v;
}

std::optional<double> value_as_double(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Count:
            return static_cast<double>(v.count);
        case Value::Kind::Sum:
            return v.sum.to_double();
        case Value::Kind::Ratio:
            return v.ratio;
        case Value::Kind::Null:
            return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

Json Value::to_json() const {
    switch (kind) {
        case Kind::Count:
            return Json(count);
        case Kind::Sum:
            return Json(sum.to_string());
        case Kind::Ratio:
            return Json(ratio);
        case Kind::Null:
            return Json(nullptr);
    }
    return Json(nullptr);
}

EvalOutcome evaluate(const Registry& registry, const std::string& metric_name,
                     const SourceProvider& provider, const RowFilter& filter) {
    const auto& def = registry.metric(metric_name);
    EvalOutcome outcome;

    if (def.agg.kind == Aggregation::Kind::Ratio) {
        auto num = evaluate(registry, def.agg.numerator, provider, filter);
        auto den = evaluate(registry, def.agg.denominator, provider, filter);
        outcome.visible_rows = num.visible_rows + den.visible_rows;
        auto n = value_as_double(num.value);
        auto d = value_as_double(den.value);
        if (!n || !d || *d == 0.0) {
            outcome.value.kind = Value::Kind::Null;
        } else {
            outcome.value.kind = Value::Kind::Ratio;
            outcome.value.ratio = *n / *d;
        }
        return outcome;
    }

    const auto* src = registry.catalog().find(def.source);
    if (!src) throw ConfigError("metric " + metric_name + ": source vanished from catalog");
    auto rows = provider(*src);

    std::vector<const Row*> visible;
    for (const auto& row : rows) {
        if (!filter(*src, row)) continue;
        if (def.filter && eval_expr(def.filter.get(), row, *src) != Tri::True) continue;
        visible.push_back(&row);
    }
    // audit row_count counts rows the principal could see from this source
    std::uint64_t rls_visible = 0;
    for (const auto& row : rows) {
        if (filter(*src, row)) ++rls_visible;
    }
    outcome.visible_rows = rls_visible;

    if (def.grain.empty()) {
        outcome.value = aggregate_rows(def, visible);
        return outcome;
    }

    std::map<std::vector<std::string>, std::vector<const Row*>> groups;
    for (const auto* r : visible) {
        std::vector<std::string> key;
        key.reserve(def.grain.size());
        for (const auto& g : def.grain) key.push_back(row_value(*r, g));
        groups[key].push_back(r);
    }
    for (const auto& [key, group_rows] : groups) {
        outcome.groups.emplace_back(key, aggregate_rows(def, group_rows));
    }
    // whole-set value alongside groups
    outcome.value = aggregate_rows(def, visible);
    return outcome;
}

}  // namespace gera::semantic
