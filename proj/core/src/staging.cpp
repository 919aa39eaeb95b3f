#include "gera/staging.hpp"

#include <algorithm>
#include <regex>

namespace gera::staging {

namespace {

Rule::Kind rule_kind_from_string(const std::string& s) {
    if (s == "trim") return Rule::Kind::Trim;
    if (s == "case_fold") return Rule::Kind::CaseFold;
    if (s == "strip_leading_zeros") return Rule::Kind::StripLeadingZeros;
    if (s == "date_parse") return Rule::Kind::DateParse;
    if (s == "code_map") return Rule::Kind::CodeMap;
    if (s == "crosswalk_lookup") return Rule::Kind::CrosswalkLookup;
    throw ConfigError("unknown normalization rule kind: \"" + s + "\"");
}

std::string strip_leading_zeros(const std::string& v) {
    auto pos = v.find_first_not_of('0');
    if (pos == std::string::npos) return v.empty() ? v : "0";
    return v.substr(pos);
}

// ISO timestamps are reduced to the source-local business date using the
// declared per-source offset; plain dates go through the declared formats.
std::optional<Date> parse_date_value(const std::string& value,
                                     const std::vector<std::string>& formats,
                                     int utc_offset_minutes) {
    auto t_pos = value.find('T');
    if (t_pos != std::string::npos) {
        static const std::regex ts_re(
            R"(^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2})(?::(\d{2}))?(Z|[+-]\d{2}:?\d{2})?$)");
        std::smatch m;
        if (!std::regex_match(value, m, ts_re)) return std::nullopt;
        int y = std::stoi(m[1]);
        unsigned mo = static_cast<unsigned>(std::stoul(m[2]));
        unsigned d = static_cast<unsigned>(std::stoul(m[3]));
        int hh = std::stoi(m[4]);
        int mi = std::stoi(m[5]);
        int tz_minutes = 0;  // offset carried by the value itself
        if (m[7].matched && m[7] != "Z") {
            std::string tz = m[7];
            int sign = tz[0] == '-' ? -1 : 1;
            tz.erase(std::remove(tz.begin(), tz.end(), ':'), tz.end());
            tz_minutes = sign * (std::stoi(tz.substr(1, 2)) * 60 + std::stoi(tz.substr(3, 2)));
        }
        Date base;
        try {
            base = Date::from_ymd(y, mo, d);
        } catch (const ValidationError&) {
            return std::nullopt;
        }
        std::int64_t minutes_utc =
            base.days() * 1440 + hh * 60 + mi - tz_minutes;  // to UTC
        std::int64_t local = minutes_utc + utc_offset_minutes;
        std::int64_t day = local >= 0 ? local / 1440 : (local - 1439) / 1440;
        return Date::from_days(day);
    }
    for (const auto& f : formats) {
        if (auto d = Date::parse_pattern(value, f)) return d;
    }
    return std::nullopt;
}

}  // namespace

NormalizationRuleSet NormalizationRuleSet::from_json(const Json& j) {
    NormalizationRuleSet rs;
    rs.version = canonical_digest(j);
    if (j.contains("source_utc_offset_minutes")) {
        for (const auto& [k, v] : j.at("source_utc_offset_minutes").items()) {
            rs.source_utc_offset_minutes[k] = v.get<int>();
        }
    }
    for (const auto& [entity, spec] : j.at("entities").items()) {
        std::vector<std::pair<std::string, std::vector<Rule>>> field_rules;
        for (const auto& [field, rules_j] : spec.at("rules").items()) {
            std::vector<Rule> rules;
            for (const auto& rj : rules_j) {
                Rule r;
                r.kind = rule_kind_from_string(rj.at("kind").get<std::string>());
                if (r.kind == Rule::Kind::DateParse) {
                    for (const auto& f : rj.at("formats")) {
                        r.date_formats.push_back(f.get<std::string>());
                    }
                } else if (r.kind == Rule::Kind::CodeMap) {
                    for (const auto& [from, to] : rj.at("map").items()) {
                        r.code_map[from] = to.get<std::string>();
                    }
                } else if (r.kind == Rule::Kind::CrosswalkLookup) {
                    r.crosswalk = rj.at("crosswalk").get<std::string>();
                    r.emit_as = rj.value("emit_as", field);
                }
                rules.push_back(std::move(r));
            }
            field_rules.emplace_back(field, std::move(rules));
        }
        rs.entities[entity] = std::move(field_rules);
    }
    return rs;
}

Crosswalk Crosswalk::from_json(const Json& j, const std::string& digest) {
    Crosswalk cw;
    cw.name = j.at("name").get<std::string>();
    cw.source_pattern = j.value("source_pattern", "");
    cw.target_pattern = j.value("target_pattern", "");
    cw.version = digest;
    if (j.contains("merged_targets")) {
        for (const auto& t : j.at("merged_targets")) cw.merged_targets.insert(t.get<std::string>());
    }
    std::map<std::string, std::string> seen_targets;
    for (const auto& [k, v] : j.at("entries").items()) {
        std::string target = v.get<std::string>();
        auto it = seen_targets.find(target);
        if (it != seen_targets.end() && !cw.merged_targets.count(target)) {
            throw ConfigError("crosswalk " + cw.name + ": sources \"" + it->second + "\" and \"" +
                              k + "\" both map to \"" + target +
                              "\" without a merged_targets declaration");
        }
        seen_targets[target] = k;
        cw.entries[k] = target;
    }
    return cw;
}

std::optional<std::string> Crosswalk::lookup(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    return it->second;
}

Json StagedRecord::to_json() const {
    Json j;
    j["lineage_id"] = lineage_id;
    j["source_id"] = source_id;
    j["entity_kind"] = entity_kind;
    j["event_date"] = event_date.to_string();
    j["ingested_as_of"] = ingested_as_of.to_string();
    Json fj = Json::object();
    for (const auto& [k, v] : fields) fj[k] = v;  // std::map: already sorted
    j["fields"] = std::move(fj);
    j["quality"] = quality;
    if (!reason.empty()) j["reason"] = reason;
    return j;
}

StagedRecord StagedRecord::from_json(const Json& j) {
    StagedRecord r;
    r.lineage_id = j.at("lineage_id").get<std::string>();
    r.source_id = j.at("source_id").get<std::string>();
    r.entity_kind = j.at("entity_kind").get<std::string>();
    r.event_date = Date::parse_iso_or_throw(j.at("event_date").get<std::string>());
    r.ingested_as_of = Date::parse_iso_or_throw(j.at("ingested_as_of").get<std::string>());
    for (const auto& [k, v] : j.at("fields").items()) r.fields[k] = v.get<std::string>();
    r.quality = j.at("quality").get<std::string>();
    r.reason = j.value("reason", "");
    return r;
}

QualityAssertionSet QualityAssertionSet::from_json(const Json& j) {
    QualityAssertionSet as;
    as.version = canonical_digest(j);
    for (const auto& [entity, list] : j.at("entities").items()) {
        std::vector<Assertion> assertions;
        for (const auto& aj : list) {
            Assertion a;
            std::string kind = aj.at("assert").get<std::string>();
            a.field = aj.at("field").get<std::string>();
            if (kind == "not_null") {
                a.kind = Assertion::Kind::NotNull;
            } else if (kind == "accepted_values") {
                a.kind = Assertion::Kind::AcceptedValues;
                for (const auto& v : aj.at("values")) a.values.insert(v.get<std::string>());
            } else if (kind == "accepted_range") {
                a.kind = Assertion::Kind::AcceptedRange;
                auto as_decimal = [](const Json& v) {
                    return Decimal::parse_or_throw(v.is_string() ? v.get<std::string>()
                                                                 : v.dump());
                };
                a.min = as_decimal(aj.at("min"));
                a.max = as_decimal(aj.at("max"));
            } else if (kind == "referential") {
                a.kind = Assertion::Kind::Referential;
                a.target_entity = aj.at("target_entity").get<std::string>();
                a.target_field = aj.at("target_field").get<std::string>();
            } else {
                throw ConfigError("unknown assertion kind: \"" + kind + "\"");
            }
            assertions.push_back(std::move(a));
        }
        as.entities[entity] = std::move(assertions);
    }
    return as;
}

void ReferentialIndex::add(const std::string& entity_kind, const std::string& field,
                           const std::string& value) {
    values_[entity_kind + "." + field].insert(value);
}

bool ReferentialIndex::contains(const std::string& entity_kind, const std::string& field,
                                const std::string& value) const {
    auto it = values_.find(entity_kind + "." + field);
    if (it != values_.end() && it->second.count(value) > 0) return true;
    return fallback_ != nullptr && fallback_->contains(entity_kind, field, value);
}

SchemaCatalog SchemaCatalog::from_json(const Json& j) {
    SchemaCatalog cat;
    cat.version = canonical_digest(j);
    auto parse_schema = [](const Json& sj) {
        ExpectedSchema s;
        for (const auto& f : sj.value("required", Json::array())) {
            s.required.push_back(f.get<std::string>());
        }
        for (const auto& f : sj.value("optional", Json::array())) {
            s.optional_fields.push_back(f.get<std::string>());
        }
        for (const auto& f : sj.value("key_fields", Json::array())) {
            s.key_fields.push_back(f.get<std::string>());
        }
        if (sj.contains("field_types")) {
            for (const auto& [k, v] : sj.at("field_types").items()) {
                s.field_types[k] = v.get<std::string>();
            }
        }
        if (sj.contains("patterns")) {
            for (const auto& [k, v] : sj.at("patterns").items()) {
                s.patterns[k] = v.get<std::string>();
            }
        }
        return s;
    };
    for (const auto& [entity, sj] : j.at("entities").items()) {
        cat.entities[entity] = parse_schema(sj);
    }
    if (j.contains("source_overrides")) {
        for (const auto& [key, sj] : j.at("source_overrides").items()) {
            cat.source_overrides[key] = parse_schema(sj);
        }
    }
    return cat;
}

const ExpectedSchema& SchemaCatalog::lookup(const std::string& source_id,
                                            const std::string& entity) const {
    auto it = source_overrides.find(source_id + ":" + entity);
    if (it != source_overrides.end()) return it->second;
    auto eit = entities.find(entity);
    if (eit == entities.end()) {
        throw ConfigError("no schema registered for entity_kind \"" + entity + "\"");
    }
    return eit->second;
}

std::string DriftReport::summary() const {
    std::string s;
    auto join = [](const std::vector<std::string>& v) {
        std::string out;
        for (const auto& x : v) {
            if (!out.empty()) out += ",";
            out += x;
        }
        return out;
    };
    if (!removed_required.empty()) s += "removed_required=" + join(removed_required);
    if (!removed_optional.empty()) {
        if (!s.empty()) s += " ";
        s += "removed=" + join(removed_optional);
    }
    if (!added.empty()) {
        if (!s.empty()) s += " ";
        s += "added=" + join(added);
    }
    return s.empty() ? "none" : s;
}

StagedRecord normalize(const ingest::RawRecord& raw, const NormalizationRuleSet& rules,
                       const std::map<std::string, Crosswalk>& crosswalks) {
    StagedRecord rec;
    rec.lineage_id = raw.lineage_id;
    rec.source_id = raw.source_id;
    rec.entity_kind = raw.entity_kind;
    rec.ingested_as_of = raw.ingested_as_of;
    rec.event_date = raw.event_date;
    for (const auto& [k, v] : raw.payload) rec.fields[k] = v;

    auto entity_rules = rules.entities.find(raw.entity_kind);
    if (entity_rules == rules.entities.end()) {
        rec.quarantine("no_rules:" + raw.entity_kind);
        return rec;
    }

    int utc_offset = 0;
    if (auto it = rules.source_utc_offset_minutes.find(raw.source_id);
        it != rules.source_utc_offset_minutes.end()) {
        utc_offset = it->second;
    } else if (auto dit = rules.source_utc_offset_minutes.find("default");
               dit != rules.source_utc_offset_minutes.end()) {
        utc_offset = dit->second;
    }

    for (const auto& [field, field_rules] : entity_rules->second) {
        auto fit = rec.fields.find(field);
        if (fit == rec.fields.end()) continue;  // absent fields are an assertion concern
        std::string value = fit->second;
        bool failed = false;
        for (const auto& rule : field_rules) {
            switch (rule.kind) {
                case Rule::Kind::Trim:
                    value = trim(value);
                    break;
                case Rule::Kind::CaseFold:
                    value = to_lower(value);
                    break;
                case Rule::Kind::StripLeadingZeros:
                    value = strip_leading_zeros(value);
                    break;
                case Rule::Kind::DateParse: {
                    auto d = parse_date_value(value, rule.date_formats, utc_offset);
                    if (!d) {
                        rec.quarantine("date_parse:" + field);
                        failed = true;
                        break;
                    }
                    value = d->to_string();
                    if (field == "event_date") rec.event_date = *d;
                    break;
                }
                case Rule::Kind::CodeMap: {
                    auto mit = rule.code_map.find(value);
                    if (mit != rule.code_map.end()) value = mit->second;
                    break;
                }
                case Rule::Kind::CrosswalkLookup: {
                    // a missing crosswalk table is the miss case writ large:
                    // every lookup quarantines instead of dropping silently
                    auto cit = crosswalks.find(rule.crosswalk);
                    std::optional<std::string> hit;
                    if (cit != crosswalks.end()) hit = cit->second.lookup(value);
                    if (!hit) {
                        rec.quarantine("crosswalk_miss:" + field);
                        failed = true;
                        break;
                    }
                    if (rule.emit_as != field) {
                        rec.fields[rule.emit_as] = *hit;
                    } else {
                        value = *hit;
                    }
                    break;
                }
            }
            if (failed) break;  // first failure wins; later rules do not run
        }
        rec.fields[field] = value;
    }
    return rec;
}

void enforce_key_fields(StagedRecord& rec, const ExpectedSchema& schema) {
    if (!rec.pass()) return;
    for (const auto& key : schema.key_fields) {
        auto v = rec.field(key);
        if (v.empty()) {
            rec.quarantine("missing_key:" + key);
            return;
        }
        auto pit = schema.patterns.find(key);
        if (pit != schema.patterns.end()) {
            std::regex re(pit->second);
            if (!std::regex_match(v, re)) {
                rec.quarantine("format:" + key);
                return;
            }
        }
    }
}

QualityReport apply_assertions(std::vector<StagedRecord>& batch,
                               const QualityAssertionSet& assertions,
                               const ReferentialIndex& index, const SchemaCatalog& catalog) {
    // configuration is validated before any record is touched
    for (const auto& [entity, list] : assertions.entities) {
        for (const auto& a : list) {
            if (a.kind == Assertion::Kind::Referential &&
                !catalog.entities.count(a.target_entity)) {
                throw ConfigError("referential assertion on " + entity +
                                  " targets unknown entity_kind \"" + a.target_entity + "\"");
            }
        }
    }

    QualityReport report;
    for (auto& rec : batch) {
        ++report.records;
        if (!rec.pass()) {
            ++report.quarantined;
            continue;
        }
        auto it = assertions.entities.find(rec.entity_kind);
        if (it == assertions.entities.end()) continue;
        for (const auto& a : it->second) {
            std::string value = rec.field(a.field);
            bool ok = true;
            std::string label;
            switch (a.kind) {
                case Assertion::Kind::NotNull:
                    ok = !value.empty();
                    label = "not_null:" + a.field;
                    break;
                case Assertion::Kind::AcceptedValues:
                    ok = a.values.count(value) > 0;
                    label = "accepted_values:" + a.field;
                    break;
                case Assertion::Kind::AcceptedRange: {
                    auto d = Decimal::parse(value);
                    ok = d && *d >= a.min && *d <= a.max;
                    label = "accepted_range:" + a.field;
                    break;
                }
                case Assertion::Kind::Referential:
                    ok = value.empty() ||
                         index.contains(a.target_entity, a.target_field, value);
                    label = "referential:" + a.field;
                    break;
            }
            if (!ok) {
                rec.quarantine(label);
                ++report.failures_by_assertion[label];
                ++report.quarantined;
                break;
            }
        }
    }
    return report;
}

DriftReport detect_schema_drift(const std::vector<std::string>& observed_fields,
                                const ExpectedSchema& expected) {
    DriftReport report;
    std::set<std::string> observed(observed_fields.begin(), observed_fields.end());
    std::set<std::string> known;
    for (const auto& f : expected.required) {
        known.insert(f);
        if (!observed.count(f)) report.removed_required.push_back(f);
    }
    for (const auto& f : expected.optional_fields) {
        known.insert(f);
        if (!observed.count(f)) report.removed_optional.push_back(f);
    }
    for (const auto& f : observed_fields) {
        if (!known.count(f)) report.added.push_back(f);
    }
    return report;
}

}  // namespace gera::staging
