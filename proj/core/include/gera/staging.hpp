#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/ingest.hpp"

namespace gera::staging {

// One normalization step. Rules are pure functions of the input value plus
// static tables; order within a field is significant.
struct Rule {
    enum class Kind { Trim, CaseFold, StripLeadingZeros, DateParse, CodeMap, CrosswalkLookup };
    Kind kind;
    std::vector<std::string> date_formats;        // DateParse
    std::map<std::string, std::string> code_map;  // CodeMap
    std::string crosswalk;                        // CrosswalkLookup
    std::string emit_as;                          // CrosswalkLookup: target field (default: same)
};

struct NormalizationRuleSet {
    // entity_kind -> ordered (field, rules) list
    std::map<std::string, std::vector<std::pair<std::string, std::vector<Rule>>>> entities;
    std::map<std::string, int> source_utc_offset_minutes;  // "default" key for fallback
    std::string version;  // content digest of the rules file

    static NormalizationRuleSet from_json(const Json& j);
};

// Versioned identifier mapping. Entries must be one-to-one onto canonical
// ids unless a target is explicitly listed as merged.
struct Crosswalk {
    std::string name;
    std::string source_pattern;
    std::string target_pattern;
    std::map<std::string, std::string> entries;
    std::set<std::string> merged_targets;
    std::string version;  // content digest

    static Crosswalk from_json(const Json& j, const std::string& digest);
    std::optional<std::string> lookup(const std::string& key) const;
};

struct StagedRecord {
    std::string lineage_id;
    std::string source_id;
    std::string entity_kind;
    Date event_date;
    Date ingested_as_of;
    std::map<std::string, std::string> fields;
    std::string quality = "pass";  // pass | quarantined
    std::string reason;            // first failure, e.g. "crosswalk_miss:circuit_id"

    bool pass() const { return quality == "pass"; }
    void quarantine(const std::string& why) {
        if (quality == "pass") {
            quality = "quarantined";
            reason = why;
        }
    }
    std::string field(const std::string& name) const {
        auto it = fields.find(name);
        return it == fields.end() ? "" : it->second;
    }

    Json to_json() const;
    static StagedRecord from_json(const Json& j);
};

struct Assertion {
    enum class Kind { NotNull, AcceptedValues, AcceptedRange, Referential };
    Kind kind;
    std::string field;
    std::set<std::string> values;      // AcceptedValues
    Decimal min, max;                  // AcceptedRange
    std::string target_entity;         // Referential
    std::string target_field;          // Referential
};

struct QualityAssertionSet {
    std::map<std::string, std::vector<Assertion>> entities;
    std::string version;

    static QualityAssertionSet from_json(const Json& j);
};

// Values present in the staged store as of the run date, for referential
// checks. An overlay index (same-day normalization output) can chain to the
// persistent store index via fallback.
class ReferentialIndex {
public:
    void add(const std::string& entity_kind, const std::string& field, const std::string& value);
    bool contains(const std::string& entity_kind, const std::string& field,
                  const std::string& value) const;
    void set_fallback(const ReferentialIndex* fallback) { fallback_ = fallback; }

private:
    std::map<std::string, std::set<std::string>> values_;
    const ReferentialIndex* fallback_ = nullptr;
};

struct QualityReport {
    std::size_t records = 0;
    std::size_t quarantined = 0;
    std::map<std::string, std::size_t> failures_by_assertion;
};

// Expected source schema per entity kind (source-specific overrides allowed).
struct ExpectedSchema {
    std::vector<std::string> required;
    std::vector<std::string> optional_fields;
    std::vector<std::string> key_fields;                 // canonical pass requirement
    std::map<std::string, std::string> field_types;      // string|number|date|bool
    std::map<std::string, std::string> patterns;         // canonical format per field
};

struct SchemaCatalog {
    std::map<std::string, ExpectedSchema> entities;
    std::map<std::string, ExpectedSchema> source_overrides;  // "source:entity"
    std::string version;

    static SchemaCatalog from_json(const Json& j);
    const ExpectedSchema& lookup(const std::string& source_id, const std::string& entity) const;
};

struct DriftReport {
    std::vector<std::string> added;
    std::vector<std::string> removed_required;
    std::vector<std::string> removed_optional;
    bool blocking() const { return !removed_required.empty(); }
    std::string summary() const;
};

// Canonicalize one raw record. Every failure mode becomes a quarantine
// reason; records are never dropped. Pure given (raw, rules, crosswalks).
StagedRecord normalize(const ingest::RawRecord& raw, const NormalizationRuleSet& rules,
                       const std::map<std::string, Crosswalk>& crosswalks);

// Evaluate assertions over a batch; verdicts land on the records, counts in
// the report. Referential targets must exist in the schema catalog.
QualityReport apply_assertions(std::vector<StagedRecord>& batch,
                               const QualityAssertionSet& assertions,
                               const ReferentialIndex& index, const SchemaCatalog& catalog);

DriftReport detect_schema_drift(const std::vector<std::string>& observed_fields,
                                const ExpectedSchema& expected);

// Validates key fields are non-empty and pattern-valid for pass records.
void enforce_key_fields(StagedRecord& rec, const ExpectedSchema& schema);

}  // namespace gera::staging
