#include "gera/reconcile.hpp"

#include <algorithm>

namespace gera::recon {

MatchSpec MatchSpec::from_json(const Json& j) {
    MatchSpec s;
    s.name = j.at("name").get<std::string>();
    s.left_entity = j.at("left").get<std::string>();
    s.right_entity = j.at("right").get<std::string>();
    for (const auto& k : j.at("keys")) s.keys.push_back(k.get<std::string>());
    s.window_days = j.value("window_days", 30);
    s.flag_rule = j.value("flag_rule", "");
    s.orphan_check = j.value("orphan_check", false);
    s.open_right_orphans = j.value("open_right_orphans", true);
    s.consistency_field = j.value("consistency_field", "");
    if (s.name.empty()) throw ConfigError("matchspec without a name");
    if (s.keys.empty()) throw ConfigError("matchspec " + s.name + ": no join keys");
    if (s.window_days < 0) throw ConfigError("matchspec " + s.name + ": window_days must be >= 0");
    return s;
}

Json MatchSpec::to_json() const {
    Json j;
    j["name"] = name;
    j["left"] = left_entity;
    j["right"] = right_entity;
    j["keys"] = keys;
    j["window_days"] = window_days;
    j["flag_rule"] = flag_rule;
    if (orphan_check) j["orphan_check"] = true;
    j["open_right_orphans"] = open_right_orphans;
    if (!consistency_field.empty()) j["consistency_field"] = consistency_field;
    return j;
}

Json ExceptionEvent::to_json() const {
    Json j;
    j["event"] = event;
    j["exception_id"] = exception_id;
    j["match_spec"] = match_spec;
    j["lineage_id"] = lineage_id;
    if (!category.empty()) j["category"] = category;
    j["as_of"] = as_of.to_string();
    if (opened_as_of) j["opened_as_of"] = opened_as_of->to_string();
    if (!status.empty()) j["status"] = status;
    if (!matched_lineage_id.empty()) j["matched_lineage_id"] = matched_lineage_id;
    if (!note.empty()) j["note"] = note;
    if (!owner.empty()) j["owner"] = owner;
    return j;
}

ExceptionEvent ExceptionEvent::from_json(const Json& j) {
    ExceptionEvent ev;
    ev.event = j.at("event").get<std::string>();
    ev.exception_id = j.at("exception_id").get<std::string>();
    ev.match_spec = j.at("match_spec").get<std::string>();
    ev.lineage_id = j.at("lineage_id").get<std::string>();
    ev.category = j.value("category", "");
    ev.as_of = Date::parse_iso_or_throw(j.at("as_of").get<std::string>());
    if (j.contains("opened_as_of")) {
        ev.opened_as_of = Date::parse_iso_or_throw(j.at("opened_as_of").get<std::string>());
    }
    ev.status = j.value("status", "");
    ev.matched_lineage_id = j.value("matched_lineage_id", "");
    ev.note = j.value("note", "");
    ev.owner = j.value("owner", "");
    return ev;
}

std::string exception_id_for(const std::string& match_spec, const std::string& lineage_id) {
    return short_id(match_spec + "|" + lineage_id);
}

std::vector<ExceptionEvent> ExceptionStore::events(std::optional<Date> through) const {
    std::vector<ExceptionEvent> out;
    for (const auto& j : store::read_ndjson(path_)) {
        auto ev = ExceptionEvent::from_json(j);
        if (through && ev.as_of > *through) continue;
        out.push_back(std::move(ev));
    }
    return out;
}

std::map<std::string, ExceptionState> ExceptionStore::fold(std::optional<Date> through) const {
    std::map<std::string, ExceptionState> state;
    for (const auto& ev : events(through)) {
        if (ev.event == "open") {
            ExceptionState s;
            s.exception_id = ev.exception_id;
            s.match_spec = ev.match_spec;
            s.lineage_id = ev.lineage_id;
            s.category = ev.category;
            s.opened_as_of = ev.opened_as_of.value_or(ev.as_of);
            state[ev.exception_id] = std::move(s);
        } else if (ev.event == "escalate") {
            auto it = state.find(ev.exception_id);
            if (it != state.end()) {
                it->second.escalated = true;
                it->second.escalated_as_of = ev.as_of;
            }
        } else if (ev.event == "assign") {
            auto it = state.find(ev.exception_id);
            if (it != state.end()) it->second.owner = ev.owner;
        } else if (ev.event == "resolve") {
            auto it = state.find(ev.exception_id);
            if (it != state.end()) {
                it->second.status = ev.status;
                it->second.resolved_as_of = ev.as_of;
                it->second.matched_lineage_id = ev.matched_lineage_id;
                if (!ev.note.empty()) it->second.note = ev.note;
                if (!ev.owner.empty()) it->second.owner = ev.owner;
            }
        }
    }
    return state;
}

void ExceptionStore::append(const ExceptionEvent& ev) {
    store::append_line(path_, ev.to_json().dump());
}

bool ExceptionStore::open_exception(std::map<std::string, ExceptionState>& state,
                                    const std::string& spec, const std::string& lineage,
                                    const std::string& category, Date opened_as_of, Date as_of) {
    auto id = exception_id_for(spec, lineage);
    if (state.count(id)) return false;  // already opened once; reruns cannot double-open
    ExceptionEvent ev;
    ev.event = "open";
    ev.exception_id = id;
    ev.match_spec = spec;
    ev.lineage_id = lineage;
    ev.category = category;
    ev.as_of = as_of;
    ev.opened_as_of = opened_as_of;
    append(ev);
    ExceptionState s;
    s.exception_id = id;
    s.match_spec = spec;
    s.lineage_id = lineage;
    s.category = category;
    s.opened_as_of = opened_as_of;
    state[id] = std::move(s);
    return true;
}

bool ExceptionStore::escalate(std::map<std::string, ExceptionState>& state,
                              const std::string& exception_id, Date as_of) {
    auto it = state.find(exception_id);
    if (it == state.end() || !it->second.open() || it->second.escalated) return false;
    ExceptionEvent ev;
    ev.event = "escalate";
    ev.exception_id = exception_id;
    ev.match_spec = it->second.match_spec;
    ev.lineage_id = it->second.lineage_id;
    ev.as_of = as_of;
    append(ev);
    it->second.escalated = true;
    it->second.escalated_as_of = as_of;
    return true;
}

bool ExceptionStore::resolve_late(std::map<std::string, ExceptionState>& state,
                                  const std::string& exception_id,
                                  const std::string& matched_lineage, Date as_of) {
    auto it = state.find(exception_id);
    if (it == state.end() || !it->second.open()) return false;
    ExceptionEvent ev;
    ev.event = "resolve";
    ev.exception_id = exception_id;
    ev.match_spec = it->second.match_spec;
    ev.lineage_id = it->second.lineage_id;
    ev.status = "matched_late";
    ev.matched_lineage_id = matched_lineage;
    ev.as_of = as_of;
    append(ev);
    it->second.status = "matched_late";
    it->second.resolved_as_of = as_of;
    it->second.matched_lineage_id = matched_lineage;
    return true;
}

void ExceptionStore::resolve_manual(const std::string& exception_id, const std::string& note,
                                    const std::string& owner, Date as_of) {
    auto state = fold();
    auto it = state.find(exception_id);
    if (it == state.end()) {
        throw ValidationError("unknown exception id: " + exception_id);
    }
    if (!it->second.open()) {
        throw ValidationError("exception " + exception_id + " is closed with status " +
                              it->second.status + "; closed exceptions never reopen");
    }
    ExceptionEvent ev;
    ev.event = "resolve";
    ev.exception_id = exception_id;
    ev.match_spec = it->second.match_spec;
    ev.lineage_id = it->second.lineage_id;
    ev.status = "resolved_manual";
    ev.note = note;
    ev.owner = owner;
    ev.as_of = as_of;
    append(ev);
}

void ExceptionStore::assign(const std::string& exception_id, const std::string& owner,
                            Date as_of) {
    auto state = fold();
    auto it = state.find(exception_id);
    if (it == state.end()) {
        throw ValidationError("unknown exception id: " + exception_id);
    }
    ExceptionEvent ev;
    ev.event = "assign";
    ev.exception_id = exception_id;
    ev.match_spec = it->second.match_spec;
    ev.lineage_id = it->second.lineage_id;
    ev.owner = owner;
    ev.as_of = as_of;
    append(ev);
}

namespace {

const char kKeySep = '\x1f';

std::optional<std::string> join_key(const StagedRecord& rec, const std::vector<std::string>& keys) {
    std::string out;
    for (const auto& k : keys) {
        auto v = rec.field(k);
        if (v.empty()) return std::nullopt;
        out += v;
        out += kKeySep;
    }
    return out;
}

bool record_order(const StagedRecord* a, const StagedRecord* b) {
    if (a->event_date != b->event_date) return a->event_date < b->event_date;
    return a->lineage_id < b->lineage_id;
}

}  // namespace

MatchOutcome run_match(const MatchSpec& spec, const std::vector<const StagedRecord*>& lefts,
                       const std::vector<const StagedRecord*>& rights, Date as_of) {
    MatchOutcome out;
    std::vector<const StagedRecord*> ordered_lefts = lefts;
    std::vector<const StagedRecord*> ordered_rights = rights;
    std::sort(ordered_lefts.begin(), ordered_lefts.end(), record_order);
    std::sort(ordered_rights.begin(), ordered_rights.end(), record_order);

    std::map<std::string, std::vector<std::pair<const StagedRecord*, bool>>> right_index;
    for (const auto* r : ordered_rights) {
        if (auto key = join_key(*r, spec.keys)) {
            right_index[*key].emplace_back(r, false);  // (record, consumed)
        }
    }
    std::set<std::string> left_keys;
    for (const auto* l : ordered_lefts) {
        if (auto key = join_key(*l, spec.keys)) left_keys.insert(*key);
    }

    if (spec.orphan_check) {
        // Flag left records with no key-sharing right at all.
        for (const auto* l : ordered_lefts) {
            auto key = join_key(*l, spec.keys);
            if (!key || !right_index.count(*key)) {
                out.right_orphans.push_back(l);  // orphaned-category bucket
            } else {
                out.matched.push_back({l, right_index[*key].front().first, true});
            }
        }
        return out;
    }

    for (const auto* l : ordered_lefts) {
        auto key = join_key(*l, spec.keys);
        const StagedRecord* hit = nullptr;
        if (key) {
            auto it = right_index.find(*key);
            if (it != right_index.end()) {
                for (auto& [r, consumed] : it->second) {
                    if (consumed) continue;
                    if (r->event_date < l->event_date) continue;
                    if (r->event_date - l->event_date > spec.window_days) continue;
                    consumed = true;
                    hit = r;
                    break;
                }
            }
        }
        if (hit) {
            bool consistent = spec.consistency_field.empty() ||
                              l->field(spec.consistency_field) == hit->field(spec.consistency_field);
            out.matched.push_back({l, hit, consistent});
        } else if (as_of > l->event_date + spec.window_days) {
            out.left_unmatched.push_back(l);
        } else {
            out.pending.push_back(l);
        }
    }

    for (const auto* r : ordered_rights) {
        auto key = join_key(*r, spec.keys);
        if (!key || !left_keys.count(*key)) {
            out.right_orphans.push_back(r);
        }
    }
    return out;
}

AgingHistogram age_and_escalate(ExceptionStore& store, std::map<std::string, ExceptionState>& state,
                                Date as_of, int escalation_days) {
    AgingHistogram hist;
    std::vector<std::string> ordered;
    for (const auto& [id, s] : state) {
        if (s.open()) ordered.push_back(id);
    }
    for (const auto& id : ordered) {
        auto& s = state.at(id);
        if (as_of < s.opened_as_of) {
            throw IntegrityError("clock regression: as_of " + as_of.to_string() +
                                 " precedes exception " + id + " opened " +
                                 s.opened_as_of.to_string());
        }
        auto age = s.age_days(as_of);
        if (age <= 7) {
            ++hist.b0_7;
        } else if (age <= 14) {
            ++hist.b8_14;
        } else if (age <= 30) {
            ++hist.b15_30;
        } else {
            ++hist.b31_plus;
        }
        if (age >= escalation_days) {
            store.escalate(state, id, as_of);
        }
    }
    return hist;
}

DedupPartition dedup_exact(const std::vector<const StagedRecord*>& records) {
    DedupPartition out;

    // Exact-duplicate natural key: every canonical field plus the event date.
    std::map<std::string, const StagedRecord*> kept;
    std::vector<const StagedRecord*> ordered = records;
    std::sort(ordered.begin(), ordered.end(), [](const StagedRecord* a, const StagedRecord* b) {
        if (a->ingested_as_of != b->ingested_as_of) return a->ingested_as_of < b->ingested_as_of;
        return a->lineage_id < b->lineage_id;
    });
    std::set<const StagedRecord*> dup_set;
    for (const auto* rec : ordered) {
        std::string nat_key = rec->event_date.to_string();
        for (const auto& [k, v] : rec->fields) {
            nat_key += kKeySep;
            nat_key += k;
            nat_key += '=';
            nat_key += v;
        }
        auto [it, inserted] = kept.emplace(nat_key, rec);
        if (!inserted) dup_set.insert(rec);  // earliest-ingested survives
    }
    for (const auto* rec : records) {
        if (dup_set.count(rec)) {
            out.duplicates.push_back(rec);
        } else {
            out.survivors.push_back(rec);
        }
    }
    return out;
}

DedupResult dedup_and_aggregate(const std::vector<const StagedRecord*>& records,
                                const GrainSpec& grain) {
    DedupResult result;
    auto parts = dedup_exact(records);
    result.duplicates = parts.duplicates;

    std::map<std::vector<std::string>, AggregatedRow> groups;
    for (const auto* rec : parts.survivors) {
        std::vector<std::string> key;
        key.reserve(grain.grain_keys.size());
        for (const auto& g : grain.grain_keys) key.push_back(rec->field(g));
        auto& row = groups[key];
        if (row.count == 0) row.key = key;
        ++row.count;
        for (const auto& f : grain.sum_fields) {
            auto d = Decimal::parse(rec->field(f));
            if (d) row.sums[f] += *d;
        }
    }

    if (grain.enforce_unique_input) {
        std::string offenders;
        for (const auto& [key, row] : groups) {
            if (row.count > 1) {
                std::string flat;
                for (const auto& part : key) {
                    if (!flat.empty()) flat += "/";
                    flat += part;
                }
                if (!offenders.empty()) offenders += ", ";
                offenders += flat;
            }
        }
        if (!offenders.empty()) {
            throw ValidationError("grain uniqueness violated for " + grain.entity_kind +
                                  " at keys: " + offenders);
        }
    }

    for (auto& [key, row] : groups) result.rows.push_back(std::move(row));
    return result;
}

std::vector<GrainComparisonRow> compare_at_grain(const std::vector<AggregatedRow>& left,
                                                 const std::vector<AggregatedRow>& right,
                                                 const std::string& sum_field) {
    std::map<std::vector<std::string>, GrainComparisonRow> rows;
    for (const auto& l : left) {
        auto& r = rows[l.key];
        r.key = l.key;
        auto it = l.sums.find(sum_field);
        if (it != l.sums.end()) r.left_total += it->second;
    }
    for (const auto& rr : right) {
        auto& r = rows[rr.key];
        r.key = rr.key;
        auto it = rr.sums.find(sum_field);
        if (it != rr.sums.end()) r.right_total += it->second;
    }
    std::vector<GrainComparisonRow> out;
    out.reserve(rows.size());
    for (auto& [k, v] : rows) out.push_back(std::move(v));
    return out;
}

}  // namespace gera::recon
