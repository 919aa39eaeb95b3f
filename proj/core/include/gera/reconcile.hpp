#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/staging.hpp"
#include "gera/store.hpp"

namespace gera::recon {

using staging::StagedRecord;

// Deterministic key join between two entity kinds. A left record matches iff
// a right record agrees on all join keys and lands inside the forward lag
// window. orphan_check specs instead flag left records that have no
// key-sharing right at all (Table-style "no source record" rules).
struct MatchSpec {
    std::string name;
    std::string left_entity;
    std::string right_entity;
    std::vector<std::string> keys;
    int window_days = 30;
    std::string flag_rule;
    bool orphan_check = false;
    bool open_right_orphans = true;
    std::string consistency_field;  // optional: matched pairs must agree on this field

    static MatchSpec from_json(const Json& j);
    Json to_json() const;
};

struct MatchOutcome {
    struct Pair {
        const StagedRecord* left;
        const StagedRecord* right;
        bool consistent = true;
    };
    std::vector<Pair> matched;
    std::vector<const StagedRecord*> pending;         // inside window, no match yet
    std::vector<const StagedRecord*> left_unmatched;  // window expired, no match
    std::vector<const StagedRecord*> right_orphans;   // no plausible left source
};

// Exception lifecycle. The store is an append-only event log; current state
// is derived by folding events in sequence.
struct ExceptionEvent {
    std::string event;  // open | escalate | assign | resolve
    std::string exception_id;
    std::string match_spec;
    std::string lineage_id;
    std::string category;  // open: unmatched | orphaned | duplicate | inconsistent
    Date as_of;
    std::optional<Date> opened_as_of;       // open
    std::string status;                     // resolve: matched_late | resolved_manual
    std::string matched_lineage_id;         // resolve
    std::string note;
    std::string owner;

    Json to_json() const;
    static ExceptionEvent from_json(const Json& j);
};

struct ExceptionState {
    std::string exception_id;
    std::string match_spec;
    std::string lineage_id;
    std::string category;
    std::string status = "open";  // open | matched_late | resolved_manual
    Date opened_as_of;
    bool escalated = false;
    std::optional<Date> escalated_as_of;
    std::optional<Date> resolved_as_of;
    std::string matched_lineage_id;
    std::string owner;
    std::string note;

    bool open() const { return status == "open"; }
    std::int64_t age_days(Date as_of) const { return as_of - opened_as_of; }
};

std::string exception_id_for(const std::string& match_spec, const std::string& lineage_id);

class ExceptionStore {
public:
    explicit ExceptionStore(store::fs::path log_path) : path_(std::move(log_path)) {}

    // Events with as_of <= through, in log order. Full log when through is null.
    std::vector<ExceptionEvent> events(std::optional<Date> through = std::nullopt) const;
    std::map<std::string, ExceptionState> fold(std::optional<Date> through = std::nullopt) const;

    void append(const ExceptionEvent& ev);

    // Guarded mutations: each appends only when it changes state, which keeps
    // reruns byte-identical.
    bool open_exception(std::map<std::string, ExceptionState>& state, const std::string& spec,
                        const std::string& lineage, const std::string& category, Date opened_as_of,
                        Date as_of);
    bool escalate(std::map<std::string, ExceptionState>& state, const std::string& exception_id,
                  Date as_of);
    bool resolve_late(std::map<std::string, ExceptionState>& state,
                      const std::string& exception_id, const std::string& matched_lineage,
                      Date as_of);
    // Throws ValidationError when the exception is unknown or already closed.
    void resolve_manual(const std::string& exception_id, const std::string& note,
                        const std::string& owner, Date as_of);
    void assign(const std::string& exception_id, const std::string& owner, Date as_of);

private:
    store::fs::path path_;
};

MatchOutcome run_match(const MatchSpec& spec, const std::vector<const StagedRecord*>& lefts,
                       const std::vector<const StagedRecord*>& rights, Date as_of);

struct AgingHistogram {
    // buckets: 0-7, 8-14, 15-30, >30
    std::size_t b0_7 = 0, b8_14 = 0, b15_30 = 0, b31_plus = 0;
};

// Recompute ages and set escalation flags for open exceptions. as_of earlier
// than any open exception's clock start is a clock regression.
AgingHistogram age_and_escalate(ExceptionStore& store, std::map<std::string, ExceptionState>& state,
                                Date as_of, int escalation_days = 14);

// Grain control: exact duplicates drop to duplicate exceptions, survivors
// aggregate to the declared grain.
struct GrainSpec {
    std::string entity_kind;
    std::vector<std::string> grain_keys;
    std::vector<std::string> sum_fields;
    bool enforce_unique_input = false;  // hard error when >1 record shares a grain key
};

struct AggregatedRow {
    std::vector<std::string> key;  // values aligned with grain_keys
    std::map<std::string, Decimal> sums;
    std::size_t count = 0;
};

struct DedupResult {
    std::vector<AggregatedRow> rows;  // sorted by key
    std::vector<const StagedRecord*> duplicates;
};

// Exact duplicates (identical canonical fields + event date) keep the
// earliest-ingested record; the rest are routed out.
struct DedupPartition {
    std::vector<const StagedRecord*> survivors;  // staging order
    std::vector<const StagedRecord*> duplicates;
};
DedupPartition dedup_exact(const std::vector<const StagedRecord*>& records);

DedupResult dedup_and_aggregate(const std::vector<const StagedRecord*>& records,
                                const GrainSpec& grain);

// 1:1 comparison of two pre-aggregated sides; join at the shared grain key.
struct GrainComparisonRow {
    std::vector<std::string> key;
    Decimal left_total;
    Decimal right_total;
};
std::vector<GrainComparisonRow> compare_at_grain(const std::vector<AggregatedRow>& left,
                                                 const std::vector<AggregatedRow>& right,
                                                 const std::string& sum_field);

struct SpecReportRow {
    std::string spec;
    std::size_t matched = 0;
    std::size_t pending = 0;
    std::size_t open = 0;
    std::size_t escalated = 0;
    std::size_t matched_late = 0;
    std::size_t resolved_manual = 0;
    std::optional<double> reconciliation_rate;  // matched / (matched + open + matched_late)
    std::optional<double> resolution_rate;      // closed / ever-opened
};

}  // namespace gera::recon
