#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gera/common.hpp"
#include "gera/staging.hpp"

namespace gera::semantic {

// ---- definition AST ------------------------------------------------------

struct Literal {
    enum class Kind { Str, Num };
    Kind kind = Kind::Str;
    std::string text;  // string literals; numbers keep canonical decimal text
    Decimal num;

    bool operator==(const Literal& o) const { return kind == o.kind && text == o.text; }
};

struct Expr {
    enum class Kind { Compare, InList, And, Or, Not, FieldTruth };
    Kind kind = Kind::FieldTruth;
    std::string op;     // Compare: = != < <= > >=
    std::string field;  // Compare / InList / FieldTruth
    Literal value;      // Compare
    std::vector<Literal> list;  // InList
    std::vector<std::unique_ptr<Expr>> children;  // And, Or, Not

    static bool equal(const Expr* a, const Expr* b);
};

struct Aggregation {
    enum class Kind { Count, CountDistinct, Sum, Ratio };
    Kind kind = Kind::Count;
    std::string field;       // CountDistinct, Sum
    std::string numerator;   // Ratio: component metric names
    std::string denominator;

    bool operator==(const Aggregation& o) const {
        return kind == o.kind && field == o.field && numerator == o.numerator &&
               denominator == o.denominator;
    }
};

struct MetricDefinition {
    std::string name;
    std::string source;
    std::unique_ptr<Expr> filter;  // optional
    Aggregation agg;
    std::vector<std::string> grain;
    std::string version;   // content digest of the definition text
    std::string location;  // file or label, for diagnostics

    bool ast_equals(const MetricDefinition& o) const;
};

// ---- parsing ---------------------------------------------------------------

class ParseError : public ValidationError {
public:
    enum class Category { Lexical, Syntax, Type };
    ParseError(Category cat, std::size_t line, std::size_t col, const std::string& msg,
               std::vector<std::string> expected = {});
    Category category;
    std::size_t line, col;
    std::vector<std::string> expected;
};

// Parses one or more metric blocks:
//   metric NAME { source: IDENT; filter: EXPR; agg: AGG; grain: f1, f2 }
std::vector<MetricDefinition> parse_metrics(std::string_view text,
                                            const std::string& location = "<input>");

// Canonical text form; parse(print(d)) reproduces d up to AST equality.
std::string print_metric(const MetricDefinition& def);

// ---- catalog and validation -----------------------------------------------

struct SourceSchema {
    std::string name;
    std::string kind;    // staged | model
    std::string entity;  // staged sources: backing entity_kind
    std::map<std::string, std::string> field_types;  // field -> string|number|date|bool
};

struct SourceCatalog {
    std::map<std::string, SourceSchema> sources;

    static SourceCatalog from_json(const Json& j, const staging::SchemaCatalog& schemas);
    const SourceSchema* find(const std::string& name) const;
};

struct LineageTrace {
    std::string metric;
    std::vector<std::string> sources;            // source names, components included
    std::vector<std::string> component_metrics;  // ratio components, evaluation order
};

// Validated, immutable registry. Duplicate names, unknown sources or fields,
// and ratio cycles are rejected with every error listed.
class Registry {
public:
    static Registry validate(std::vector<MetricDefinition> defs, const SourceCatalog& catalog);

    const MetricDefinition& metric(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    std::vector<std::string> names() const;  // sorted
    LineageTrace lineage(const std::string& name) const;
    const SourceCatalog& catalog() const { return catalog_; }

private:
    std::vector<MetricDefinition> defs_;
    std::map<std::string, std::size_t> index_;
    SourceCatalog catalog_;
};

// ---- evaluation -------------------------------------------------------------

using Row = std::map<std::string, std::string>;

// Supplies the full (pre-RLS) row set of a source at the evaluation as_of.
// Missing data must throw; silent zero is forbidden.
using SourceProvider = std::function<std::vector<Row>(const SourceSchema& source)>;

// Row-level security hook: object name is the metric's source name.
using RowFilter = std::function<bool(const SourceSchema& source, const Row& row)>;

struct Value {
    enum class Kind { Count, Sum, Ratio, Null };
    Kind kind = Kind::Null;
    std::int64_t count = 0;
    Decimal sum;
    double ratio = 0;

    Json to_json() const;
};

struct EvalOutcome {
    Value value;
    std::vector<std::pair<std::vector<std::string>, Value>> groups;  // grain key -> value
    std::uint64_t visible_rows = 0;  // rows aggregated after RLS, audit row_count
};

EvalOutcome evaluate(const Registry& registry, const std::string& metric_name,
                     const SourceProvider& provider, const RowFilter& filter);

}  // namespace gera::semantic
