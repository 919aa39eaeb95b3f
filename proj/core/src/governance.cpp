#include "gera/governance.hpp"

#include <algorithm>

#include "gera/ingest.hpp"

namespace gera::governance {

PolicySet PolicySet::from_json(const Json& j, const std::set<std::string>& extra_objects) {
    PolicySet ps;
    ps.version = canonical_digest(j);
    for (const auto& pj : j.at("policies")) {
        Policy p;
        p.role = pj.at("role").get<std::string>();
        p.object = pj.at("object").get<std::string>();
        if (p.role.empty()) throw ConfigError("policy with empty role");
        if (p.object != "*" && !ingest::is_entity_kind(p.object) &&
            !extra_objects.count(p.object)) {
            throw ConfigError("policy names unknown object \"" + p.object + "\"");
        }
        const auto& terr = pj.at("territories");
        if (terr.is_string() && terr.get<std::string>() == "*") {
            p.territory_wildcard = true;
        } else {
            if (!terr.is_array()) {
                throw ConfigError("policy territories must be an array or \"*\"");
            }
            for (const auto& t : terr) p.territories.insert(t.get<std::string>());
            if (p.territories.empty()) {
                throw ConfigError("policy for role " + p.role +
                                  " has an empty territory set; use \"*\" for all");
            }
            p.territory_field = pj.value("territory_field", "location_id");
        }
        ps.policies.push_back(std::move(p));
    }
    return ps;
}

bool row_visible(const PolicySet& policies, const Principal& principal,
                 const std::string& object_name,
                 const std::function<std::string(const std::string&)>& field_of) {
    for (const auto& p : policies.policies) {
        if (p.role != principal.role) continue;
        if (p.object != "*" && p.object != object_name) continue;
        if (p.territory_wildcard) return true;
        std::string value = field_of(p.territory_field);
        if (!value.empty() && p.territories.count(value)) return true;
    }
    return false;
}

Json AuditEvent::to_json() const {
    Json j;
    j["seq"] = seq;
    j["as_of"] = as_of.to_string();
    j["role"] = role;
    j["territories"] = territories;
    j["action"] = action;
    j["object"] = object;
    j["row_count"] = row_count;
    j["policy_version"] = policy_version;
    if (action == "retention_tombstone") {
        j["removed_count"] = removed_count;
        j["removed_from"] = removed_from;
        j["removed_to"] = removed_to;
        j["segment_hash"] = segment_hash;
    }
    j["prev_hash"] = prev_hash;
    j["event_hash"] = event_hash;
    return j;
}

AuditEvent AuditEvent::from_json(const Json& j) {
    AuditEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.as_of = Date::parse_iso_or_throw(j.at("as_of").get<std::string>());
    e.role = j.at("role").get<std::string>();
    for (const auto& t : j.at("territories")) e.territories.push_back(t.get<std::string>());
    e.action = j.at("action").get<std::string>();
    e.object = j.at("object").get<std::string>();
    e.row_count = j.at("row_count").get<std::uint64_t>();
    e.policy_version = j.at("policy_version").get<std::string>();
    e.removed_count = j.value("removed_count", std::uint64_t{0});
    e.removed_from = j.value("removed_from", "");
    e.removed_to = j.value("removed_to", "");
    e.segment_hash = j.value("segment_hash", "");
    e.prev_hash = j.at("prev_hash").get<std::string>();
    e.event_hash = j.at("event_hash").get<std::string>();
    return e;
}

std::string AuditEvent::compute_hash() const {
    Json j = to_json();
    j.erase("event_hash");
    j.erase("prev_hash");
    return sha256_hex(prev_hash + canonical_json(j));
}

namespace {

struct Tail {
    std::uint64_t seq = 0;
    std::string hash = kGenesisHash;
};

Tail read_tail(const store::fs::path& manifest_path) {
    auto content = store::read_file_if_exists(manifest_path);
    if (!content) return {};
    Json j = Json::parse(*content);
    return {j.at("tail_seq").get<std::uint64_t>(), j.at("tail_hash").get<std::string>()};
}

void write_tail(const store::fs::path& manifest_path, const Tail& t) {
    Json j;
    j["tail_seq"] = t.seq;
    j["tail_hash"] = t.hash;
    store::write_json_atomic(manifest_path, j);
}

}  // namespace

std::uint64_t AuditLog::append(Date as_of, const Principal& principal, const std::string& action,
                               const std::string& object, std::uint64_t row_count,
                               const std::string& policy_version) {
    store::FileLock lock(log_path_.parent_path() / ".lock");
    Tail tail = read_tail(manifest_path_);
    AuditEvent e;
    e.seq = tail.seq + 1;
    e.as_of = as_of;
    e.role = principal.role;
    e.territories = principal.territories;
    e.action = action;
    e.object = object;
    e.row_count = row_count;
    e.policy_version = policy_version;
    e.prev_hash = tail.hash;
    e.event_hash = e.compute_hash();
    store::append_line(log_path_, e.to_json().dump());
    write_tail(manifest_path_, {e.seq, e.event_hash});
    return e.seq;
}

std::vector<AuditEvent> AuditLog::events() const {
    std::vector<AuditEvent> out;
    for (const auto& j : store::read_ndjson(log_path_)) {
        out.push_back(AuditEvent::from_json(j));
    }
    return out;
}

VerifyResult AuditLog::verify() const {
    VerifyResult result;
    auto evs = events();
    std::string prev = kGenesisHash;
    std::uint64_t prev_seq = 0;
    for (std::size_t i = 0; i < evs.size(); ++i) {
        const auto& e = evs[i];
        if (e.prev_hash != prev) {
            result.ok = false;
            result.first_broken_seq = e.seq;
            result.detail = "prev_hash mismatch at seq " + std::to_string(e.seq);
            return result;
        }
        if (e.compute_hash() != e.event_hash) {
            result.ok = false;
            result.first_broken_seq = e.seq;
            result.detail = "event_hash mismatch at seq " + std::to_string(e.seq);
            return result;
        }
        if (prev_seq != 0 && e.seq <= prev_seq) {
            result.ok = false;
            result.first_broken_seq = e.seq;
            result.detail = "sequence not increasing at seq " + std::to_string(e.seq);
            return result;
        }
        prev = e.event_hash;
        prev_seq = e.seq;
    }
    Tail tail = read_tail(manifest_path_);
    if (tail.seq != prev_seq || tail.hash != prev) {
        result.ok = false;
        result.first_broken_seq = prev_seq;
        result.detail = "manifest tail (seq " + std::to_string(tail.seq) +
                        ") does not match log tail (seq " + std::to_string(prev_seq) +
                        "); possible truncation";
    }
    return result;
}

CompactionSummary AuditLog::retention_compact(int retention_days, Date as_of) {
    if (retention_days < 1) throw ValidationError("retention_days must be >= 1");
    store::FileLock lock(log_path_.parent_path() / ".lock");

    auto pre = verify();
    if (!pre.ok) {
        throw IntegrityError("refusing to compact an unverified log: " + pre.detail);
    }

    Date cutoff = as_of - retention_days;
    auto evs = events();

    // only a prefix can be removed without breaking the chain
    std::size_t removable = 0;
    while (removable < evs.size() && evs[removable].as_of < cutoff) ++removable;

    CompactionSummary summary;
    summary.retained = evs.size() - removable;
    if (removable == 0) return summary;

    std::string segment;
    for (std::size_t i = 0; i < removable; ++i) {
        segment += evs[i].to_json().dump();
        segment += '\n';
    }

    AuditEvent tomb;
    tomb.seq = evs[removable - 1].seq;
    tomb.as_of = as_of;
    tomb.role = "system";
    tomb.action = "retention_tombstone";
    tomb.object = "audit_log";
    tomb.row_count = 0;
    tomb.policy_version = "";
    tomb.removed_count = removable;
    tomb.removed_from = evs.front().as_of.to_string();
    tomb.removed_to = evs[removable - 1].as_of.to_string();
    tomb.segment_hash = sha256_hex(segment);
    tomb.prev_hash = kGenesisHash;
    tomb.event_hash = tomb.compute_hash();

    std::string out = tomb.to_json().dump() + "\n";
    std::string prev = tomb.event_hash;
    for (std::size_t i = removable; i < evs.size(); ++i) {
        AuditEvent e = evs[i];
        e.prev_hash = prev;
        e.event_hash = e.compute_hash();
        out += e.to_json().dump();
        out += '\n';
        prev = e.event_hash;
    }
    std::uint64_t tail_seq = evs.empty() ? tomb.seq : evs.back().seq;

    store::write_file_atomic(log_path_, out);
    write_tail(manifest_path_, {tail_seq, prev});

    summary.removed = removable;
    summary.tombstone_written = true;
    return summary;
}

}  // namespace gera::governance
