#include "gera/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace gera::pipeline {

namespace fs = store::fs;

namespace {

const std::set<std::string> kSupplyEntities = {"receiving", "issuance", "installation",
                                               "inventory_movement"};

struct State {
    std::optional<Date> last_processed;
    std::string policy_version;
    std::set<std::string> staged_batches;
};

State load_state(const store::StoreRoot& root) {
    State s;
    auto content = store::read_file_if_exists(root.pipeline_state());
    if (!content) return s;
    Json j = Json::parse(*content);
    if (j.contains("last_processed_as_of")) {
        s.last_processed = Date::parse_iso_or_throw(j.at("last_processed_as_of").get<std::string>());
    }
    s.policy_version = j.value("policy_version", "");
    for (const auto& b : j.value("staged_batches", Json::array())) {
        s.staged_batches.insert(b.get<std::string>());
    }
    return s;
}

void save_state(const store::StoreRoot& root, const State& s) {
    Json j;
    if (s.last_processed) j["last_processed_as_of"] = s.last_processed->to_string();
    j["policy_version"] = s.policy_version;
    j["staged_batches"] = std::vector<std::string>(s.staged_batches.begin(),
                                                   s.staged_batches.end());
    store::write_json_atomic(root.pipeline_state(), j);
}

std::int64_t whole_quantity(const std::string& raw) {
    auto d = Decimal::parse(raw);
    if (!d) return 0;
    return d->raw() / Decimal::kScale;
}

std::string fmt_rate(const std::optional<double>& r) {
    if (!r) return "null";
    std::ostringstream ss;
    ss << *r;
    return ss.str();
}

}  // namespace

Engine::Engine(store::StoreRoot root)
    : root_(std::move(root)),
      config_(config::load(root_)),
      audit_(root_.audit_log(), root_.audit_manifest()),
      exceptions_(root_.exceptions_log()),
      flags_(root_.flags_log()) {}

std::optional<Date> Engine::last_processed() const { return load_state(root_).last_processed; }

void Engine::load_staged_from_disk() {
    if (staged_loaded_) return;
    staged_loaded_ = true;
    auto dir = root_.staged_dir();
    std::error_code ec;
    if (!fs::exists(dir, ec)) return;
    for (const auto& entity_dir : fs::directory_iterator(dir)) {
        if (!entity_dir.is_directory() || entity_dir.path().filename() == "META") continue;
        std::string entity = entity_dir.path().filename().string();
        std::vector<fs::path> day_files;
        for (const auto& day_dir : fs::directory_iterator(entity_dir.path())) {
            day_files.push_back(day_dir.path() / "records.ndjson");
        }
        std::sort(day_files.begin(), day_files.end());
        for (const auto& f : day_files) {
            for (const auto& j : store::read_ndjson(f)) {
                staged_[entity].push_back(staging::StagedRecord::from_json(j));
            }
        }
    }
    // referential index over everything already staged
    std::set<std::pair<std::string, std::string>> targets;
    for (const auto& [entity, assertions] : config_.assertions.entities) {
        for (const auto& a : assertions) {
            if (a.kind == staging::Assertion::Kind::Referential) {
                targets.insert({a.target_entity, a.target_field});
            }
        }
    }
    for (const auto& [entity, field] : targets) {
        auto it = staged_.find(entity);
        if (it == staged_.end()) continue;
        for (const auto& rec : it->second) {
            referential_.add(entity, field, rec.field(field));
        }
    }
}

void Engine::load_snapshot_history() {
    if (history_loaded_) return;
    history_loaded_ = true;
    auto dir = root_.inventory_dir() / "snapshots";
    std::error_code ec;
    if (!fs::exists(dir, ec)) return;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        for (const auto& j : store::read_ndjson(f)) {
            auto snap = inventory::Snapshot::from_json(j);
            if (snap.quarantined) continue;
            history_[{snap.material_id, snap.location_id}].emplace_back(snap.snapshot_date,
                                                                        snap.quantity_on_hand);
        }
    }
}

std::vector<const staging::StagedRecord*> Engine::visible(const std::string& entity,
                                                          Date d) const {
    std::vector<const staging::StagedRecord*> out;
    auto it = staged_.find(entity);
    if (it == staged_.end()) return out;
    for (const auto& rec : it->second) {
        if (rec.ingested_as_of <= d) out.push_back(&rec);
    }
    return out;
}

std::vector<const staging::StagedRecord*> Engine::deduped_visible(
    const std::string& entity, Date d, std::vector<const staging::StagedRecord*>* dups) {
    auto records = visible(entity, d);
    if (!kSupplyEntities.count(entity)) {
        if (dups) dups->clear();
        return records;
    }
    auto parts = recon::dedup_exact(records);
    if (dups) *dups = parts.duplicates;
    return parts.survivors;
}

// ---- staging ---------------------------------------------------------------

void Engine::stage_day(Date d, RunSummary& summary) {
    load_staged_from_disk();
    ingest::RawStore raw(root_);
    State state = load_state(root_);

    std::vector<staging::StagedRecord> day_records;
    std::vector<std::string> drift_warnings;
    std::map<std::string, std::set<std::string>> sources_by_entity;
    std::vector<std::string> staged_hashes;

    for (const auto& batch : raw.list_batches()) {
        if (batch.as_of > d) continue;
        if (state.staged_batches.count(batch.batch_hash)) continue;
        staged_hashes.push_back(batch.batch_hash);
        ++summary.batches_staged;
        auto rows = raw.read_batch(batch);
        sources_by_entity[batch.entity_kind].insert(batch.source_id);

        // drift check against the registered schema, per batch
        std::vector<std::string> observed;
        std::set<std::string> seen;
        for (const auto& r : rows) {
            for (const auto& [k, v] : r.payload) {
                if (seen.insert(k).second) observed.push_back(k);
            }
        }
        const auto& schema = config_.schemas.lookup(batch.source_id, batch.entity_kind);
        auto drift = staging::detect_schema_drift(observed, schema);
        if (!rows.empty() && drift.blocking()) {
            for (const auto& r : rows) {
                staging::StagedRecord rec;
                rec.lineage_id = r.lineage_id;
                rec.source_id = r.source_id;
                rec.entity_kind = r.entity_kind;
                rec.event_date = r.event_date;
                rec.ingested_as_of = r.ingested_as_of;
                for (const auto& [k, v] : r.payload) rec.fields[k] = v;
                rec.quarantine("schema_drift:" + drift.summary());
                day_records.push_back(std::move(rec));
            }
            drift_warnings.push_back(batch.source_id + "/" + batch.entity_kind + "@" +
                                     batch.as_of.to_string() + " blocked: " + drift.summary());
            continue;
        }
        if (!rows.empty() && !drift.added.empty()) {
            drift_warnings.push_back(batch.source_id + "/" + batch.entity_kind + "@" +
                                     batch.as_of.to_string() + " additive: " + drift.summary());
        }

        for (const auto& r : rows) {
            auto rec = staging::normalize(r, config_.rules, config_.crosswalks);
            staging::enforce_key_fields(rec, schema);
            day_records.push_back(std::move(rec));
        }
    }

    // two-phase barrier: referential assertions see the full post-
    // normalization snapshot for the day, then verdicts land
    staging::ReferentialIndex overlay;
    overlay.set_fallback(&referential_);
    std::set<std::pair<std::string, std::string>> targets;
    for (const auto& [entity, assertions] : config_.assertions.entities) {
        for (const auto& a : assertions) {
            if (a.kind == staging::Assertion::Kind::Referential) {
                targets.insert({a.target_entity, a.target_field});
            }
        }
    }
    for (const auto& rec : day_records) {
        if (!rec.pass()) continue;
        for (const auto& [entity, field] : targets) {
            if (rec.entity_kind == entity) overlay.add(entity, field, rec.field(field));
        }
    }
    staging::apply_assertions(day_records, config_.assertions, overlay, config_.schemas);

    // write outputs grouped by (bucket, entity, partition date)
    std::map<fs::path, std::vector<std::string>> appends;
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // entity -> (pass, quar)
    for (const auto& rec : day_records) {
        if (rec.pass()) {
            appends[root_.staged_partition(rec.entity_kind, rec.ingested_as_of)].push_back(
                rec.to_json().dump());
            ++counts[rec.entity_kind].first;
            ++summary.records_pass;
        } else {
            appends[root_.quarantine_partition(rec.ingested_as_of)].push_back(
                rec.to_json().dump());
            ++counts[rec.entity_kind].second;
            ++summary.records_quarantined;
        }
    }
    for (const auto& [path, lines] : appends) {
        std::string content = store::read_file_if_exists(path).value_or("");
        for (const auto& line : lines) {
            content += line;
            content += '\n';
        }
        store::write_file_atomic(path, content);
    }

    // run metadata for lineage
    Json meta;
    meta["as_of"] = d.to_string();
    meta["rules_version"] = config_.rules.version;
    meta["schemas_version"] = config_.schemas.version;
    meta["assertions_version"] = config_.assertions.version;
    Json cw = Json::object();
    for (const auto& [name, c] : config_.crosswalks) cw[name] = c.version;
    meta["crosswalks"] = std::move(cw);
    Json entities = Json::object();
    for (const auto& [entity, pq] : counts) {
        Json ej;
        ej["pass"] = pq.first;
        ej["quarantined"] = pq.second;
        ej["sources"] = std::vector<std::string>(sources_by_entity[entity].begin(),
                                                 sources_by_entity[entity].end());
        entities[entity] = std::move(ej);
    }
    meta["entities"] = std::move(entities);
    meta["drift_warnings"] = drift_warnings;
    store::write_json_atomic(root_.staged_meta(d), meta);

    // update caches and state
    for (auto& rec : day_records) {
        if (!rec.pass()) continue;
        for (const auto& [entity, field] : targets) {
            if (rec.entity_kind == entity) referential_.add(entity, field, rec.field(field));
        }
        staged_[rec.entity_kind].push_back(std::move(rec));
    }
    for (const auto& h : staged_hashes) state.staged_batches.insert(h);
    save_state(root_, state);
}

// ---- reconciliation ----------------------------------------------------------

void Engine::reconcile_day(Date d, RunSummary& summary) {
    auto state = exceptions_.fold();

    // rights already consumed by earlier late resolutions, plus records that
    // are themselves exception subjects, cannot resolve anything again
    std::set<std::string> used_rights;
    for (const auto& [id, st] : state) {
        if (!st.matched_lineage_id.empty()) used_rights.insert(st.matched_lineage_id);
        used_rights.insert(st.lineage_id);
    }

    // duplicate routing for supply entities
    for (const auto& entity : kSupplyEntities) {
        std::vector<const staging::StagedRecord*> dups;
        deduped_visible(entity, d, &dups);
        std::sort(dups.begin(), dups.end(),
                  [](const staging::StagedRecord* a, const staging::StagedRecord* b) {
                      return a->lineage_id < b->lineage_id;
                  });
        for (const auto* dup : dups) {
            if (exceptions_.open_exception(state, "dedup:" + entity, dup->lineage_id, "duplicate",
                                           d, d)) {
                ++summary.exceptions_opened;
            }
        }
    }

    for (const auto& spec : config_.matchspecs) {
        auto lefts = kSupplyEntities.count(spec.left_entity)
                         ? deduped_visible(spec.left_entity, d, nullptr)
                         : visible(spec.left_entity, d);
        auto rights = kSupplyEntities.count(spec.right_entity)
                          ? deduped_visible(spec.right_entity, d, nullptr)
                          : visible(spec.right_entity, d);
        std::vector<const staging::StagedRecord*> pass_lefts, pass_rights;
        for (const auto* l : lefts) {
            if (l->pass()) pass_lefts.push_back(l);
        }
        for (const auto* r : rights) {
            if (r->pass()) pass_rights.push_back(r);
        }

        auto outcome = recon::run_match(spec, pass_lefts, pass_rights, d);

        std::map<std::string, const staging::StagedRecord*> matched_right_by_left;
        std::set<std::string> consumed;
        for (const auto& pair : outcome.matched) {
            matched_right_by_left[pair.left->lineage_id] = pair.right;
            consumed.insert(pair.right->lineage_id);
        }

        auto join_key = [&](const staging::StagedRecord& rec) {
            std::string key;
            for (const auto& k : spec.keys) {
                auto v = rec.field(k);
                if (v.empty()) return std::string();
                key += v;
                key += '\x1f';
            }
            return key;
        };

        // open new exceptions
        if (spec.orphan_check) {
            for (const auto* l : outcome.right_orphans) {
                if (exceptions_.open_exception(state, spec.name, l->lineage_id, "orphaned", d,
                                               d)) {
                    ++summary.exceptions_opened;
                }
            }
        } else {
            for (const auto* l : outcome.left_unmatched) {
                if (exceptions_.open_exception(state, spec.name, l->lineage_id, "unmatched",
                                               l->event_date + spec.window_days, d)) {
                    ++summary.exceptions_opened;
                }
            }
            if (spec.open_right_orphans) {
                for (const auto* r : outcome.right_orphans) {
                    if (exceptions_.open_exception(state, spec.name, r->lineage_id, "orphaned", d,
                                                   d)) {
                        ++summary.exceptions_opened;
                    }
                }
            }
            for (const auto& pair : outcome.matched) {
                if (!pair.consistent &&
                    !state.count(recon::exception_id_for(spec.name, pair.left->lineage_id))) {
                    if (exceptions_.open_exception(state, spec.name, pair.left->lineage_id,
                                                   "inconsistent", d, d)) {
                        ++summary.exceptions_opened;
                    }
                }
            }
        }

        // late resolutions
        std::map<std::string, const staging::StagedRecord*> left_by_lineage, right_by_lineage;
        for (const auto* l : pass_lefts) left_by_lineage[l->lineage_id] = l;
        for (const auto* r : pass_rights) right_by_lineage[r->lineage_id] = r;
        std::map<std::string, std::vector<const staging::StagedRecord*>> rights_by_key,
            lefts_by_key;
        for (const auto* r : pass_rights) {
            auto key = join_key(*r);
            if (!key.empty()) rights_by_key[key].push_back(r);
        }
        for (const auto* l : pass_lefts) {
            auto key = join_key(*l);
            if (!key.empty()) lefts_by_key[key].push_back(l);
        }
        auto by_date = [](const staging::StagedRecord* a, const staging::StagedRecord* b) {
            if (a->event_date != b->event_date) return a->event_date < b->event_date;
            return a->lineage_id < b->lineage_id;
        };
        for (auto& [k, v] : rights_by_key) std::sort(v.begin(), v.end(), by_date);
        for (auto& [k, v] : lefts_by_key) std::sort(v.begin(), v.end(), by_date);

        std::vector<const recon::ExceptionState*> open_here;
        for (const auto& [id, st] : state) {
            if (st.match_spec == spec.name && st.open()) open_here.push_back(&st);
        }
        std::sort(open_here.begin(), open_here.end(),
                  [](const recon::ExceptionState* a, const recon::ExceptionState* b) {
                      if (a->opened_as_of != b->opened_as_of) {
                          return a->opened_as_of < b->opened_as_of;
                      }
                      return a->exception_id < b->exception_id;
                  });

        for (const auto* st_ptr : open_here) {
            const auto st = *st_ptr;  // copy: resolves mutate the map
            if (st.category == "unmatched") {
                auto lit = left_by_lineage.find(st.lineage_id);
                if (lit == left_by_lineage.end()) continue;
                const auto* left = lit->second;
                // an in-window counterpart that arrived after the window
                // expired resolves the open exception as matched_late
                auto mit = matched_right_by_left.find(left->lineage_id);
                if (mit != matched_right_by_left.end()) {
                    if (exceptions_.resolve_late(state, st.exception_id,
                                                 mit->second->lineage_id, d)) {
                        used_rights.insert(mit->second->lineage_id);
                        ++summary.exceptions_resolved;
                    }
                    continue;
                }
                auto key = join_key(*left);
                if (key.empty()) continue;
                auto rit = rights_by_key.find(key);
                if (rit == rights_by_key.end()) continue;
                std::vector<const staging::StagedRecord*> candidates;
                for (const auto* r : rit->second) {
                    if (r->event_date < left->event_date) continue;
                    if (consumed.count(r->lineage_id) || used_rights.count(r->lineage_id)) {
                        continue;
                    }
                    candidates.push_back(r);
                }
                if (candidates.empty()) continue;
                const auto* winner = candidates.front();
                if (exceptions_.resolve_late(state, st.exception_id, winner->lineage_id, d)) {
                    used_rights.insert(winner->lineage_id);
                    ++summary.exceptions_resolved;
                    // remaining simultaneous candidates are duplicate billings
                    for (std::size_t i = 1; i < candidates.size(); ++i) {
                        if (exceptions_.open_exception(state, spec.name,
                                                       candidates[i]->lineage_id, "duplicate", d,
                                                       d)) {
                            used_rights.insert(candidates[i]->lineage_id);
                            ++summary.exceptions_opened;
                        }
                    }
                }
            } else if (st.category == "orphaned") {
                // counterpart appearing on the other side closes the orphan
                const staging::StagedRecord* rec = nullptr;
                const std::map<std::string, std::vector<const staging::StagedRecord*>>* other =
                    nullptr;
                if (spec.orphan_check) {
                    auto lit = left_by_lineage.find(st.lineage_id);
                    if (lit != left_by_lineage.end()) rec = lit->second;
                    other = &rights_by_key;
                } else {
                    auto rit2 = right_by_lineage.find(st.lineage_id);
                    if (rit2 != right_by_lineage.end()) rec = rit2->second;
                    other = &lefts_by_key;
                }
                if (!rec) continue;
                auto key = join_key(*rec);
                if (key.empty()) continue;
                auto oit = other->find(key);
                if (oit == other->end() || oit->second.empty()) continue;
                if (exceptions_.resolve_late(state, st.exception_id,
                                             oit->second.front()->lineage_id, d)) {
                    ++summary.exceptions_resolved;
                }
            }
        }
    }

    recon::age_and_escalate(exceptions_, state, d, config_.escalation_days);
}

// ---- inventory ---------------------------------------------------------------

std::map<inventory::SeriesKey, std::vector<inventory::Movement>> Engine::movements_through(
    Date d) {
    std::map<inventory::SeriesKey, std::vector<inventory::Movement>> out;
    auto add = [&](const staging::StagedRecord& rec, bool is_receipt) {
        inventory::SeriesKey key{rec.field("material_code"), rec.field("location_id")};
        if (key.material_id.empty()) return;
        inventory::Movement m;
        m.event_date = rec.event_date;
        m.lineage_id = rec.lineage_id;
        m.quantity = whole_quantity(rec.field("quantity"));
        m.is_receipt = is_receipt;
        out[key].push_back(std::move(m));
    };
    for (const auto* rec : deduped_visible("receiving", d, nullptr)) {
        if (rec->pass()) add(*rec, true);
    }
    for (const auto* rec : deduped_visible("issuance", d, nullptr)) {
        if (rec->pass()) add(*rec, false);
    }
    for (const auto* rec : deduped_visible("inventory_movement", d, nullptr)) {
        if (rec->pass()) add(*rec, rec->field("movement_type") == "receipt");
    }
    for (auto& [key, moves] : out) {
        std::sort(moves.begin(), moves.end(),
                  [](const inventory::Movement& a, const inventory::Movement& b) {
                      if (a.event_date != b.event_date) return a.event_date < b.event_date;
                      return a.lineage_id < b.lineage_id;
                  });
    }
    return out;
}

void Engine::inventory_day(Date d, RunSummary& summary) {
    load_snapshot_history();
    auto movements = movements_through(d);
    auto snapshots = inventory::take_snapshot(d, movements);

    std::vector<Json> snapshot_rows, lot_rows;
    auto flag_state = flags_.fold();
    for (const auto& snap : snapshots) {
        snapshot_rows.push_back(snap.to_json());
        if (snap.quarantined) continue;
        inventory::SeriesKey key{snap.material_id, snap.location_id};
        for (const auto& lot : inventory::fifo_age(d, key, movements.at(key))) {
            lot_rows.push_back(lot.to_json());
        }

        // trailing window excludes the evaluated point
        auto hit = history_.find(key);
        if (hit != history_.end() && !hit->second.empty()) {
            std::vector<double> window;
            const auto& series = hit->second;
            std::size_t take = std::min<std::size_t>(series.size(), config_.anomaly.window_size);
            for (std::size_t i = series.size() - take; i < series.size(); ++i) {
                window.push_back(static_cast<double>(series[i].second));
            }
            double x = static_cast<double>(snap.quantity_on_hand);
            struct MethodEval {
                const char* name;
                inventory::Evaluation eval;
            };
            MethodEval evals[] = {
                {"zscore", inventory::evaluate_zscore(window, x, config_.anomaly)},
                {"mad", inventory::evaluate_mad(window, x, config_.anomaly)},
                {"iqr", inventory::evaluate_iqr(window, x, config_.anomaly)},
            };
            for (const auto& me : evals) {
                if (me.eval.status == inventory::Evaluation::Status::Flagged) {
                    if (flags_.record_flag(flag_state, key, d, me.name, x, me.eval, d)) {
                        ++summary.flags_raised;
                    }
                }
            }
        }
    }
    for (const auto& snap : snapshots) {
        if (snap.quarantined) continue;
        history_[{snap.material_id, snap.location_id}].emplace_back(d, snap.quantity_on_hand);
    }

    store::write_ndjson_atomic(root_.snapshot_file(d), snapshot_rows);
    store::write_ndjson_atomic(root_.lots_file(d), lot_rows);
}

// ---- run ---------------------------------------------------------------------

RunSummary Engine::run(Date as_of, int lookback_days) {
    if (lookback_days < 0) throw ValidationError("lookback must be >= 0");
    store::FileLock lock(root_.lock_file(), /*try_only=*/true);

    State state = load_state(root_);
    if (state.policy_version != config_.policies.version) {
        governance::Principal system{"system", {}};
        std::string note = (state.policy_version.empty() ? std::string("genesis")
                                                         : state.policy_version) +
                           "->" + config_.policies.version;
        audit_.append(as_of, system, "admin_policy_change", note, 0, config_.policies.version);
        state.policy_version = config_.policies.version;
        save_state(root_, state);
    }

    RunSummary summary;
    summary.as_of = as_of;

    ingest::RawStore raw(root_);
    auto range = raw.partition_date_range();
    Date start = as_of;
    if (state.last_processed) {
        start = *state.last_processed + 1;
    } else if (range) {
        start = std::max(range->first, as_of - lookback_days);
    }

    load_staged_from_disk();
    load_snapshot_history();

    for (Date d = start; d <= as_of; d = d + 1) {
        stage_day(d, summary);
        reconcile_day(d, summary);
        inventory_day(d, summary);
        State st = load_state(root_);
        st.last_processed = d;
        save_state(root_, st);
        ++summary.days_processed;
    }

    auto report = recon_report(as_of);
    store::write_file_atomic(root_.reports_dir(as_of) / "recon.json", report.dump(2) + "\n");
    store::write_file_atomic(root_.reports_dir(as_of) / "recon.txt", recon_report_text(report));
    auto aging = aging_report(as_of);
    store::write_file_atomic(root_.reports_dir(as_of) / "aging.json", aging.dump(2) + "\n");
    store::write_file_atomic(root_.reports_dir(as_of) / "aging.txt", aging_report_text(aging));

    return summary;
}

// ---- reports -------------------------------------------------------------------

std::vector<Json> Engine::recon_status_rows(Date as_of) {
    load_staged_from_disk();
    auto state = exceptions_.fold(as_of);
    std::map<std::string, const recon::ExceptionState*> by_subject;
    for (const auto& [id, st] : state) by_subject[id] = &st;

    std::vector<Json> rows;
    auto add_row = [&](const std::string& spec, const std::string& status,
                       const std::string& category, bool escalated,
                       const staging::StagedRecord* rec, const std::string& lineage) {
        Json r;
        r["match_spec"] = spec;
        r["status"] = status;
        r["category"] = category;
        r["escalated"] = escalated ? "true" : "false";
        r["location_id"] = rec ? rec->field("location_id") : "";
        r["lineage_id"] = lineage;
        rows.push_back(std::move(r));
    };

    for (const auto& spec : config_.matchspecs) {
        auto lefts = kSupplyEntities.count(spec.left_entity)
                         ? deduped_visible(spec.left_entity, as_of, nullptr)
                         : visible(spec.left_entity, as_of);
        auto rights = kSupplyEntities.count(spec.right_entity)
                          ? deduped_visible(spec.right_entity, as_of, nullptr)
                          : visible(spec.right_entity, as_of);
        std::vector<const staging::StagedRecord*> pass_lefts, pass_rights;
        for (const auto* l : lefts) {
            if (l->pass()) pass_lefts.push_back(l);
        }
        for (const auto* r : rights) {
            if (r->pass()) pass_rights.push_back(r);
        }
        auto outcome = recon::run_match(spec, pass_lefts, pass_rights, as_of);
        std::set<std::string> matched_lefts;
        for (const auto& pair : outcome.matched) matched_lefts.insert(pair.left->lineage_id);

        std::map<std::string, const staging::StagedRecord*> by_lineage;
        for (const auto* l : pass_lefts) by_lineage[l->lineage_id] = l;
        for (const auto* r : pass_rights) by_lineage[r->lineage_id] = r;

        auto state_for = [&](const std::string& lineage) -> const recon::ExceptionState* {
            auto it = state.find(recon::exception_id_for(spec.name, lineage));
            return it == state.end() ? nullptr : &it->second;
        };

        if (spec.orphan_check) {
            for (const auto* l : pass_lefts) {
                const auto* st = state_for(l->lineage_id);
                if (st) {
                    add_row(spec.name, st->status, st->category, st->escalated, l,
                            l->lineage_id);
                } else {
                    add_row(spec.name, "matched", "", false, l, l->lineage_id);
                }
            }
            continue;
        }

        for (const auto* l : pass_lefts) {
            const auto* st = state_for(l->lineage_id);
            if (st) {
                add_row(spec.name, st->status, st->category, st->escalated, l, l->lineage_id);
            } else if (matched_lefts.count(l->lineage_id)) {
                add_row(spec.name, "matched", "", false, l, l->lineage_id);
            } else {
                add_row(spec.name, "pending", "", false, l, l->lineage_id);
            }
        }
        // right-side exceptions (orphans, duplicate billings)
        for (const auto& [id, st] : state) {
            if (st.match_spec != spec.name) continue;
            auto bit = by_lineage.find(st.lineage_id);
            bool is_left = false;
            if (bit != by_lineage.end()) {
                is_left = bit->second->entity_kind == spec.left_entity;
            }
            if (is_left) continue;  // already covered above
            add_row(spec.name, st.status, st.category, st.escalated,
                    bit == by_lineage.end() ? nullptr : bit->second, st.lineage_id);
        }
    }

    // dedup exceptions
    std::map<std::string, const staging::StagedRecord*> all_by_lineage;
    for (const auto& [entity, recs] : staged_) {
        for (const auto& rec : recs) all_by_lineage[rec.lineage_id] = &rec;
    }
    for (const auto& [id, st] : state) {
        if (st.match_spec.rfind("dedup:", 0) != 0) continue;
        auto it = all_by_lineage.find(st.lineage_id);
        add_row(st.match_spec, st.status, st.category, st.escalated,
                it == all_by_lineage.end() ? nullptr : it->second, st.lineage_id);
    }
    return rows;
}

Json Engine::recon_report(Date as_of) {
    load_staged_from_disk();
    auto rows = recon_status_rows(as_of);
    auto state = exceptions_.fold(as_of);

    std::map<std::string, recon::SpecReportRow> per_spec;
    for (const auto& spec : config_.matchspecs) per_spec[spec.name].spec = spec.name;
    for (const auto& row : rows) {
        auto& r = per_spec[row.at("match_spec").get<std::string>()];
        if (r.spec.empty()) r.spec = row.at("match_spec").get<std::string>();
        std::string status = row.at("status").get<std::string>();
        if (status == "matched") {
            ++r.matched;
        } else if (status == "pending") {
            ++r.pending;
        } else if (status == "open") {
            ++r.open;
            if (row.at("escalated").get<std::string>() == "true") ++r.escalated;
        } else if (status == "matched_late") {
            ++r.matched_late;
        } else if (status == "resolved_manual") {
            ++r.resolved_manual;
        }
    }

    Json specs = Json::array();
    for (auto& [name, r] : per_spec) {
        std::size_t denom = r.matched + r.open + r.matched_late;
        if (denom > 0) {
            r.reconciliation_rate = static_cast<double>(r.matched) / static_cast<double>(denom);
        }
        std::size_t ever = r.open + r.matched_late + r.resolved_manual;
        if (ever > 0) {
            r.resolution_rate =
                static_cast<double>(r.matched_late + r.resolved_manual) /
                static_cast<double>(ever);
        }
        Json sj;
        sj["spec"] = r.spec;
        sj["matched"] = r.matched;
        sj["pending"] = r.pending;
        sj["open"] = r.open;
        sj["escalated"] = r.escalated;
        sj["matched_late"] = r.matched_late;
        sj["resolved_manual"] = r.resolved_manual;
        sj["reconciliation_rate"] =
            r.reconciliation_rate ? Json(*r.reconciliation_rate) : Json(nullptr);
        sj["resolution_rate"] = r.resolution_rate ? Json(*r.resolution_rate) : Json(nullptr);
        specs.push_back(std::move(sj));
    }

    // aging histogram over open exceptions: 0-7, 8-14, 15-30, >30
    recon::AgingHistogram hist;
    for (const auto& [id, st] : state) {
        if (!st.open()) continue;
        auto age = st.age_days(as_of);
        if (age <= 7) {
            ++hist.b0_7;
        } else if (age <= 14) {
            ++hist.b8_14;
        } else if (age <= 30) {
            ++hist.b15_30;
        } else {
            ++hist.b31_plus;
        }
    }

    // supply quantity reconciliation at the (po, material) grain
    recon::GrainSpec recv_grain{"receiving", {"po_id", "material_code"}, {"quantity"}, false};
    recon::GrainSpec iss_grain{"issuance", {"po_id", "material_code"}, {"quantity"}, false};
    auto recv = recon::dedup_and_aggregate(visible("receiving", as_of), recv_grain);
    auto iss = recon::dedup_and_aggregate(visible("issuance", as_of), iss_grain);
    auto comparison = recon::compare_at_grain(recv.rows, iss.rows, "quantity");

    Json supply = Json::array();
    for (const auto& c : comparison) {
        Json cj;
        cj["po_id"] = c.key.size() > 0 ? c.key[0] : "";
        cj["material_code"] = c.key.size() > 1 ? c.key[1] : "";
        cj["received"] = c.left_total.to_string();
        cj["issued"] = c.right_total.to_string();
        supply.push_back(std::move(cj));
    }

    Json report;
    report["as_of"] = as_of.to_string();
    auto st = load_state(root_);
    report["processed_through"] =
        st.last_processed ? Json(st.last_processed->to_string()) : Json(nullptr);
    report["specs"] = std::move(specs);
    Json hj;
    hj["0-7"] = hist.b0_7;
    hj["8-14"] = hist.b8_14;
    hj["15-30"] = hist.b15_30;
    hj[">30"] = hist.b31_plus;
    report["aging_histogram"] = std::move(hj);
    report["supply_quantity_recon"] = std::move(supply);
    return report;
}

std::string Engine::recon_report_text(const Json& report) {
    std::ostringstream out;
    out << "reconciliation report  as_of=" << report.at("as_of").get<std::string>() << "\n\n";
    out << "spec                        matched  pending     open  escalated     late   manual    rate\n";
    for (const auto& s : report.at("specs")) {
        char line[160];
        std::string rate = s.at("reconciliation_rate").is_null()
                               ? "null"
                               : fmt_rate(s.at("reconciliation_rate").get<double>());
        std::snprintf(line, sizeof(line), "%-26s %8zu %8zu %8zu %10zu %8zu %8zu  %6s\n",
                      s.at("spec").get<std::string>().c_str(),
                      s.at("matched").get<std::size_t>(), s.at("pending").get<std::size_t>(),
                      s.at("open").get<std::size_t>(), s.at("escalated").get<std::size_t>(),
                      s.at("matched_late").get<std::size_t>(),
                      s.at("resolved_manual").get<std::size_t>(), rate.c_str());
        out << line;
    }
    const auto& h = report.at("aging_histogram");
    out << "\nexception aging: 0-7=" << h.at("0-7").get<std::size_t>()
        << " 8-14=" << h.at("8-14").get<std::size_t>()
        << " 15-30=" << h.at("15-30").get<std::size_t>() << " >30="
        << h.at(">30").get<std::size_t>() << "\n";
    if (!report.at("supply_quantity_recon").empty()) {
        out << "\nsupply quantity reconciliation (po, material): received vs issued\n";
        for (const auto& c : report.at("supply_quantity_recon")) {
            out << "  " << c.at("po_id").get<std::string>() << " "
                << c.at("material_code").get<std::string>() << ": received="
                << c.at("received").get<std::string>() << " issued="
                << c.at("issued").get<std::string>() << "\n";
        }
    }
    return out.str();
}

Json Engine::aging_report(Date as_of) {
    std::vector<inventory::LotAllocation> lots;
    for (const auto& j : store::read_ndjson(root_.lots_file(as_of))) {
        lots.push_back(inventory::LotAllocation::from_json(j));
    }
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::int64_t>> per_key;
    std::map<std::string, std::int64_t> totals;
    for (const auto& lot : lots) {
        per_key[{lot.material_id, lot.location_id}][lot.bucket] += lot.remaining_qty;
        totals[lot.bucket] += lot.remaining_qty;
    }
    static const char* buckets[] = {"0-30", "31-60", "61-90", ">90"};

    Json rows = Json::array();
    Json callouts = Json::array();
    for (const auto& [key, bucket_map] : per_key) {
        Json rj;
        rj["material_id"] = key.first;
        rj["location_id"] = key.second;
        std::int64_t on_hand = 0;
        for (const char* b : buckets) {
            auto it = bucket_map.find(b);
            std::int64_t q = it == bucket_map.end() ? 0 : it->second;
            rj[b] = q;
            on_hand += q;
        }
        rj["on_hand"] = on_hand;
        rows.push_back(rj);
        auto over90 = bucket_map.find(">90");
        if (over90 != bucket_map.end() && over90->second > 0) {
            Json cj;
            cj["material_id"] = key.first;
            cj["location_id"] = key.second;
            cj["quantity"] = over90->second;
            callouts.push_back(std::move(cj));
        }
    }
    Json report;
    report["as_of"] = as_of.to_string();
    report["rows"] = std::move(rows);
    Json tj;
    for (const char* b : buckets) tj[b] = totals.count(b) ? totals[b] : 0;
    report["bucket_totals"] = std::move(tj);
    report["over_90_callouts"] = std::move(callouts);
    return report;
}

std::string Engine::aging_report_text(const Json& report) {
    std::ostringstream out;
    out << "inventory aging  as_of=" << report.at("as_of").get<std::string>() << "\n\n";
    out << "material    location     0-30   31-60   61-90     >90  on_hand\n";
    for (const auto& r : report.at("rows")) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-11s %-9s %7lld %7lld %7lld %7lld %8lld\n",
                      r.at("material_id").get<std::string>().c_str(),
                      r.at("location_id").get<std::string>().c_str(),
                      static_cast<long long>(r.at("0-30").get<std::int64_t>()),
                      static_cast<long long>(r.at("31-60").get<std::int64_t>()),
                      static_cast<long long>(r.at("61-90").get<std::int64_t>()),
                      static_cast<long long>(r.at(">90").get<std::int64_t>()),
                      static_cast<long long>(r.at("on_hand").get<std::int64_t>()));
        out << line;
    }
    if (!report.at("over_90_callouts").empty()) {
        out << "\naged >90 days:\n";
        for (const auto& c : report.at("over_90_callouts")) {
            out << "  " << c.at("material_id").get<std::string>() << " @ "
                << c.at("location_id").get<std::string>() << ": "
                << c.at("quantity").get<std::int64_t>() << " units\n";
        }
    }
    return out.str();
}

// ---- governed reads -------------------------------------------------------------

void Engine::require_processed_through(Date as_of) const {
    auto state = load_state(root_);
    if (!state.last_processed || *state.last_processed < as_of) {
        throw ValidationError("no data processed through " + as_of.to_string() +
                              "; run the pipeline first (processed through " +
                              (state.last_processed ? state.last_processed->to_string()
                                                    : std::string("never")) +
                              ")");
    }
}

Json Engine::exceptions_list(Date as_of, const governance::Principal& principal) {
    load_staged_from_disk();
    auto state = exceptions_.fold(as_of);
    std::map<std::string, const staging::StagedRecord*> by_lineage;
    for (const auto& [entity, recs] : staged_) {
        for (const auto& rec : recs) by_lineage[rec.lineage_id] = &rec;
    }
    Json rows = Json::array();
    std::uint64_t visible_count = 0;
    for (const auto& [id, st] : state) {
        auto it = by_lineage.find(st.lineage_id);
        auto field_of = [&](const std::string& f) -> std::string {
            return it == by_lineage.end() ? "" : it->second->field(f);
        };
        if (!governance::row_visible(config_.policies, principal, "exceptions", field_of)) {
            continue;
        }
        ++visible_count;
        Json r;
        r["exception_id"] = st.exception_id;
        r["match_spec"] = st.match_spec;
        r["lineage_id"] = st.lineage_id;
        r["category"] = st.category;
        r["status"] = st.status;
        r["opened_as_of"] = st.opened_as_of.to_string();
        r["age_days"] = st.open() ? st.age_days(as_of) : 0;
        r["escalated"] = st.escalated;
        if (!st.owner.empty()) r["owner"] = st.owner;
        if (st.resolved_as_of) r["resolved_as_of"] = st.resolved_as_of->to_string();
        if (!st.matched_lineage_id.empty()) r["matched_lineage_id"] = st.matched_lineage_id;
        if (!st.note.empty()) r["note"] = st.note;
        r["location_id"] = field_of("location_id");
        rows.push_back(std::move(r));
    }
    audit_.append(as_of, principal, "read_exceptions", "exceptions", visible_count,
                  config_.policies.version);
    Json out;
    out["as_of"] = as_of.to_string();
    out["exceptions"] = std::move(rows);
    return out;
}

Json Engine::flags_list(Date as_of, const governance::Principal& principal) {
    auto flag_state = flags_.fold(as_of);
    auto queue = inventory::investigation_queue(flag_state);
    Json rows = Json::array();
    std::uint64_t visible_count = 0;
    // queue lines group the methods that fired for one (series, date)
    std::map<std::pair<std::string, Date>, Json> grouped;
    std::vector<std::pair<std::string, Date>> order;
    for (const auto& entry : queue) {
        const auto& f = entry.flag;
        auto field_of = [&](const std::string& name) -> std::string {
            if (name == "location_id") return f.location_id;
            if (name == "material_id") return f.material_id;
            return "";
        };
        if (!governance::row_visible(config_.policies, principal, "inventory_flags", field_of)) {
            continue;
        }
        ++visible_count;
        std::pair<std::string, Date> gkey{f.material_id + "|" + f.location_id, f.snapshot_date};
        auto git = grouped.find(gkey);
        if (git == grouped.end()) {
            Json r;
            r["material_id"] = f.material_id;
            r["location_id"] = f.location_id;
            r["snapshot_date"] = f.snapshot_date.to_string();
            r["observed"] = f.observed;
            r["methods"] = Json::array();
            r["max_normalized_score"] = 0.0;
            grouped[gkey] = std::move(r);
            order.push_back(gkey);
            git = grouped.find(gkey);
        }
        Json m;
        m["method"] = f.method;
        m["score"] = std::isinf(f.score) ? Json("inf") : Json(f.score);
        m["threshold"] = f.threshold;
        m["flag_id"] = f.flag_id;
        git->second["methods"].push_back(std::move(m));
        double norm = std::isinf(entry.normalized_score) ? 1e300 : entry.normalized_score;
        if (norm > git->second["max_normalized_score"].get<double>()) {
            git->second["max_normalized_score"] = norm;
        }
    }
    for (const auto& key : order) rows.push_back(grouped.at(key));
    audit_.append(as_of, principal, "read_report", "inventory_flags", visible_count,
                  config_.policies.version);
    Json out;
    out["as_of"] = as_of.to_string();
    out["queue"] = std::move(rows);
    return out;
}

Json Engine::recon_report_governed(Date as_of, const governance::Principal& principal) {
    auto report = recon_report(as_of);
    audit_.append(as_of, principal, "read_report", "recon_report",
                  report.at("specs").size(), config_.policies.version);
    return report;
}

Json Engine::aging_report_governed(Date as_of, const governance::Principal& principal) {
    auto report = aging_report(as_of);
    // aging rows carry territory: filter to the principal's visibility
    Json filtered = Json::array();
    for (const auto& row : report.at("rows")) {
        auto field_of = [&](const std::string& name) -> std::string {
            if (row.contains(name) && row.at(name).is_string()) {
                return row.at(name).get<std::string>();
            }
            return "";
        };
        if (governance::row_visible(config_.policies, principal, "lot_allocations", field_of)) {
            filtered.push_back(row);
        }
    }
    Json callouts = Json::array();
    for (const auto& row : report.at("over_90_callouts")) {
        auto field_of = [&](const std::string& name) -> std::string {
            if (row.contains(name) && row.at(name).is_string()) {
                return row.at(name).get<std::string>();
            }
            return "";
        };
        if (governance::row_visible(config_.policies, principal, "lot_allocations", field_of)) {
            callouts.push_back(row);
        }
    }
    // bucket totals recomputed over visible rows
    Json totals;
    for (const char* b : {"0-30", "31-60", "61-90", ">90"}) {
        std::int64_t t = 0;
        for (const auto& row : filtered) t += row.at(b).get<std::int64_t>();
        totals[b] = t;
    }
    report["rows"] = std::move(filtered);
    report["bucket_totals"] = std::move(totals);
    report["over_90_callouts"] = std::move(callouts);
    audit_.append(as_of, principal, "read_report", "inventory_aging", report.at("rows").size(),
                  config_.policies.version);
    return report;
}

// ---- metric evaluation -----------------------------------------------------------

Json Engine::metric_result(const std::string& name, Date as_of,
                           const governance::Principal& principal, std::uint64_t* rows_out) {
    require_processed_through(as_of);
    load_staged_from_disk();

    const auto& def = config_.registry.metric(name);

    semantic::SourceProvider provider = [&](const semantic::SourceSchema& src) {
        std::vector<semantic::Row> rows;
        if (src.kind == "staged") {
            for (const auto* rec : visible(src.entity, as_of)) {
                if (rec->pass()) rows.push_back(rec->fields);
            }
        } else if (src.name == "lot_allocations") {
            for (const auto& j : store::read_ndjson(root_.lots_file(as_of))) {
                semantic::Row row;
                auto lot = inventory::LotAllocation::from_json(j);
                row["material_id"] = lot.material_id;
                row["location_id"] = lot.location_id;
                row["bucket"] = lot.bucket;
                row["remaining_qty"] = std::to_string(lot.remaining_qty);
                row["snapshot_date"] = as_of.to_string();
                rows.push_back(std::move(row));
            }
        } else if (src.name == "recon_status") {
            for (const auto& j : recon_status_rows(as_of)) {
                semantic::Row row;
                for (const auto& [k, v] : j.items()) row[k] = v.get<std::string>();
                rows.push_back(std::move(row));
            }
        } else if (src.name == "exceptions") {
            auto state = exceptions_.fold(as_of);
            std::map<std::string, const staging::StagedRecord*> by_lineage;
            for (const auto& [entity, recs] : staged_) {
                for (const auto& rec : recs) by_lineage[rec.lineage_id] = &rec;
            }
            for (const auto& [id, st] : state) {
                semantic::Row row;
                row["match_spec"] = st.match_spec;
                row["category"] = st.category;
                row["status"] = st.status;
                row["escalated"] = st.escalated ? "true" : "false";
                row["age_days"] = std::to_string(st.open() ? st.age_days(as_of) : 0);
                row["opened_as_of"] = st.opened_as_of.to_string();
                row["owner"] = st.owner;
                auto it = by_lineage.find(st.lineage_id);
                row["location_id"] = it == by_lineage.end() ? "" : it->second->field("location_id");
                rows.push_back(std::move(row));
            }
        } else {
            throw ConfigError("no provider for model source \"" + src.name + "\"");
        }
        return rows;
    };

    semantic::RowFilter filter = [&](const semantic::SourceSchema& src,
                                     const semantic::Row& row) {
        auto field_of = [&](const std::string& f) -> std::string {
            auto it = row.find(f);
            return it == row.end() ? "" : it->second;
        };
        for (const auto& object : {name, src.name, src.entity}) {
            if (object.empty()) continue;
            if (governance::row_visible(config_.policies, principal, object, field_of)) {
                return true;
            }
        }
        return false;
    };

    auto outcome = semantic::evaluate(config_.registry, name, provider, filter);
    if (rows_out) *rows_out = outcome.visible_rows;

    auto trace = config_.registry.lineage(name);

    // source systems and config versions from the staging run records
    std::set<std::string> systems;
    Json config_versions = Json::object();
    {
        auto meta_dir = root_.staged_dir() / "META";
        std::error_code ec;
        if (fs::exists(meta_dir, ec)) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(meta_dir)) {
                files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            std::set<std::string> entities;
            for (const auto& s : trace.sources) {
                const auto* src = config_.catalog.find(s);
                if (src && src->kind == "staged") entities.insert(src->entity);
            }
            for (const auto& f : files) {
                auto day = Date::parse_iso(f.stem().string());
                if (!day || *day > as_of) continue;
                Json meta = Json::parse(store::read_file(f));
                for (const auto& [entity, ej] : meta.at("entities").items()) {
                    if (!entities.count(entity)) continue;
                    for (const auto& s : ej.at("sources")) systems.insert(s.get<std::string>());
                }
                config_versions["normalization"] = meta.at("rules_version");
                config_versions["schemas"] = meta.at("schemas_version");
                config_versions["assertions"] = meta.at("assertions_version");
                config_versions["crosswalks"] = meta.at("crosswalks");
            }
        }
    }

    Json result;
    result["metric"] = name;
    result["as_of"] = as_of.to_string();
    result["value"] = outcome.value.to_json();
    if (!def.grain.empty()) {
        Json groups = Json::array();
        for (const auto& [key, value] : outcome.groups) {
            Json gj;
            Json kj = Json::object();
            for (std::size_t i = 0; i < def.grain.size(); ++i) {
                kj[def.grain[i]] = i < key.size() ? key[i] : "";
            }
            gj["key"] = std::move(kj);
            gj["value"] = value.to_json();
            groups.push_back(std::move(gj));
        }
        result["groups"] = std::move(groups);
    }
    Json lineage;
    lineage["sources"] = trace.sources;
    lineage["component_metrics"] = trace.component_metrics;
    lineage["source_systems"] = std::vector<std::string>(systems.begin(), systems.end());
    lineage["config_versions"] = std::move(config_versions);
    result["lineage"] = std::move(lineage);
    result["definition_digest"] = def.version;
    return result;
}

Json Engine::metric_eval(const std::string& name, Date as_of,
                         const governance::Principal& principal) {
    std::uint64_t rows = 0;
    auto result = metric_result(name, as_of, principal, &rows);
    audit_.append(as_of, principal, "evaluate_metric", name, rows, config_.policies.version);
    return result;
}

std::vector<Json> Engine::metrics_report(Date as_of, const governance::Principal& principal) {
    std::vector<Json> out;
    for (const auto& name : config_.registry.names()) {
        out.push_back(metric_eval(name, as_of, principal));
    }
    return out;
}

// ---- exception / flag mutations -----------------------------------------------

void Engine::exception_resolve(const std::string& id, const std::string& note,
                               const std::string& owner, Date as_of) {
    exceptions_.resolve_manual(id, note, owner, as_of);
}

void Engine::exception_assign(const std::string& id, const std::string& owner, Date as_of) {
    exceptions_.assign(id, owner, as_of);
}

void Engine::flag_disposition(const std::string& flag_id, const std::string& disposition,
                              const std::string& note, Date as_of) {
    flags_.set_disposition(flag_id, disposition, note, as_of);
}

}  // namespace gera::pipeline
