#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/store.hpp"

namespace gera::governance {

// Allow-only row predicate: a role sees rows of an object (entity kind,
// metric name, or "*") whose territory value is in the allowed set. No
// matching policy means zero visibility.
struct Policy {
    std::string role;
    std::string object;
    std::string territory_field;
    std::set<std::string> territories;
    bool territory_wildcard = false;
};

struct PolicySet {
    std::vector<Policy> policies;
    std::string version;  // content digest of the policy file

    // extra_objects: metric and model names that are valid policy objects in
    // addition to entity kinds and "*". Unknown objects reject the load.
    static PolicySet from_json(const Json& j, const std::set<std::string>& extra_objects = {});
};

struct Principal {
    std::string role;
    std::vector<std::string> territories;  // asserted attributes, recorded in audit
};

// Deny-by-default. A row lacking the territory field is visible only
// through wildcard-territory policies.
bool row_visible(const PolicySet& policies, const Principal& principal,
                 const std::string& object_name,
                 const std::function<std::string(const std::string&)>& field_of);

// ---- append-only hash-chained audit log ---------------------------------

inline constexpr const char* kGenesisHash =
    "0000000000000000000000000000000000000000000000000000000000000000";

struct AuditEvent {
    std::uint64_t seq = 0;
    Date as_of;
    std::string role;
    std::vector<std::string> territories;
    std::string action;  // evaluate_metric | read_report | read_exceptions |
                         // admin_policy_change | retention_tombstone
    std::string object;
    std::uint64_t row_count = 0;
    std::string policy_version;
    // tombstone-only fields
    std::uint64_t removed_count = 0;
    std::string removed_from, removed_to;
    std::string segment_hash;

    std::string prev_hash;
    std::string event_hash;

    Json to_json() const;
    static AuditEvent from_json(const Json& j);

    // digest(prev_hash || canonical serialization of all other fields)
    std::string compute_hash() const;
};

struct VerifyResult {
    bool ok = true;
    std::optional<std::uint64_t> first_broken_seq;
    std::string detail;
};

struct CompactionSummary {
    std::uint64_t removed = 0;
    std::uint64_t retained = 0;
    bool tombstone_written = false;
};

class AuditLog {
public:
    AuditLog(store::fs::path log_path, store::fs::path manifest_path)
        : log_path_(std::move(log_path)), manifest_path_(std::move(manifest_path)) {}

    // Chains the event to the current tail and makes it durable before
    // returning. The single serialized writer is enforced with a file lock.
    std::uint64_t append(Date as_of, const Principal& principal, const std::string& action,
                         const std::string& object, std::uint64_t row_count,
                         const std::string& policy_version);

    std::vector<AuditEvent> events() const;

    // Recomputes the full chain and cross-checks the manifest tail, which
    // catches tail truncation the chain alone cannot see.
    VerifyResult verify() const;

    // Replaces events older than (as_of - retention_days) with one tombstone
    // carrying their count, date range, and segment hash, then re-anchors the
    // chain on the tombstone. Refuses to compact an unverifiable log.
    CompactionSummary retention_compact(int retention_days, Date as_of);

private:
    store::fs::path log_path_;
    store::fs::path manifest_path_;
};

}  // namespace gera::governance
