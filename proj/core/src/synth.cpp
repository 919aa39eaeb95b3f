#include "gera/synth.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "gera/inventory.hpp"
#include "gera/reconcile.hpp"
#include "gera/staging.hpp"

namespace gera::synth {

namespace fs = store::fs;

ScenarioConfig ScenarioConfig::from_json(const Json& j) {
    ScenarioConfig c;
    c.seed = j.value("seed", std::uint64_t{1});
    c.subscribers = j.at("subscribers").get<std::size_t>();
    c.start_date = Date::parse_iso_or_throw(j.at("start_date").get<std::string>());
    c.days = j.value("days", 60);
    c.billing_cycle_days = j.value("billing_cycle_days", 30);
    if (j.contains("locations")) {
        c.locations.clear();
        for (const auto& l : j.at("locations")) c.locations.push_back(l.get<std::string>());
    }
    c.materials = j.value("materials", 4);
    if (j.contains("sources")) {
        c.sources.clear();
        for (const auto& s : j.at("sources")) c.sources.insert(s.get<std::string>());
    }
    if (j.contains("faults")) {
        for (const auto& fj : j.at("faults")) {
            FaultSpec f;
            f.kind = fj.at("kind").get<std::string>();
            f.count = fj.value("count", std::size_t{1});
            f.days = fj.value("days", 30);
            f.copies = fj.value("copies", 2);
            f.mode = fj.value("mode", "drop");
            f.field = fj.value("field", "");
            f.multiplier = fj.value("multiplier", 10);
            c.faults.push_back(std::move(f));
        }
    }
    for (const auto& loc : c.locations) {
        if (loc.size() != 2 || !std::isupper((unsigned char)loc[0]) ||
            !std::isupper((unsigned char)loc[1])) {
            throw ValidationError("scenario locations must be two-letter region codes, got \"" +
                                  loc + "\"");
        }
    }
    if (c.days < 40) throw ValidationError("scenario needs days >= 40 to outlive match windows");
    return c;
}

Json ScenarioConfig::to_json() const {
    Json j;
    j["seed"] = seed;
    j["subscribers"] = subscribers;
    j["start_date"] = start_date.to_string();
    j["days"] = days;
    j["billing_cycle_days"] = billing_cycle_days;
    j["locations"] = locations;
    j["materials"] = materials;
    j["sources"] = std::vector<std::string>(sources.begin(), sources.end());
    Json faults = Json::array();
    for (const auto& f : this->faults) {
        Json fj;
        fj["kind"] = f.kind;
        fj["count"] = f.count;
        fj["days"] = f.days;
        fj["copies"] = f.copies;
        fj["mode"] = f.mode;
        fj["field"] = f.field;
        fj["multiplier"] = f.multiplier;
        faults.push_back(std::move(fj));
    }
    j["faults"] = std::move(faults);
    return j;
}

namespace {

std::string pad(std::size_t n, int width) {
    std::string s = std::to_string(n);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

// rows keyed by (source, entity, arrival date); emitted as CSV or NDJSON
struct Emitter {
    struct Batch {
        std::vector<std::string> columns;
        std::vector<std::vector<std::string>> rows;
        bool csv = true;
    };
    std::map<std::tuple<std::string, std::string, Date>, Batch> batches;

    void add(const std::string& source, const std::string& entity, Date arrival, bool csv,
             const std::vector<std::string>& columns, std::vector<std::string> row) {
        auto& b = batches[{source, entity, arrival}];
        if (b.columns.empty()) {
            b.columns = columns;
            b.csv = csv;
        }
        b.rows.push_back(std::move(row));
    }
};

std::string csv_quote(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string render_csv(const Emitter::Batch& b) {
    std::string out;
    for (std::size_t i = 0; i < b.columns.size(); ++i) {
        if (i) out += ",";
        out += csv_quote(b.columns[i]);
    }
    out += "\n";
    for (const auto& row : b.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += csv_quote(row[i]);
        }
        out += "\n";
    }
    return out;
}

std::string render_ndjson(const Emitter::Batch& b) {
    std::string out;
    for (const auto& row : b.rows) {
        Json j = Json::object();
        for (std::size_t i = 0; i < b.columns.size(); ++i) j[b.columns[i]] = row[i];
        out += j.dump();
        out += "\n";
    }
    return out;
}

struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    // distributions are implementation-defined; raw engine + modulo keeps
    // outputs identical across platforms
    std::uint64_t next(std::uint64_t bound) { return engine() % bound; }
};

std::vector<std::size_t> pick_distinct(Rng& rng, std::size_t population, std::size_t want,
                                       std::set<std::size_t>& taken) {
    if (want > population) {
        throw ValidationError("fault count " + std::to_string(want) +
                              " exceeds population " + std::to_string(population));
    }
    std::vector<std::size_t> out;
    while (out.size() < want) {
        auto idx = static_cast<std::size_t>(rng.next(population));
        if (taken.insert(idx).second) out.push_back(idx);
        if (taken.size() == population && out.size() < want) {
            throw ValidationError("fault counts exceed the subscriber population");
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

GeneratedScenario generate(const ScenarioConfig& config, const fs::path& out_dir) {
    Rng rng(config.seed);
    Date start = config.start_date;
    Date final_day = start + (config.days - 1);
    int cycle = config.billing_cycle_days;
    std::size_t n = config.subscribers;
    std::size_t n_loc = config.locations.size();

    // fault assignment over subscribers
    std::set<std::size_t> taken;
    std::vector<std::size_t> silent_subs, late_subs;
    const FaultSpec* late_fault = nullptr;
    std::vector<FaultSpec> supply_faults;
    for (const auto& f : config.faults) {
        if (f.kind == "silent_mapping_failure") {
            auto picked = pick_distinct(rng, n, f.count, taken);
            silent_subs.insert(silent_subs.end(), picked.begin(), picked.end());
        } else if (f.kind == "late_arrival") {
            if (f.days <= cycle - 10) {
                throw ValidationError(
                    "late_arrival delay must exceed billing_cycle_days - 10 so the "
                    "window expires before the invoice lands");
            }
            auto picked = pick_distinct(rng, n, f.count, taken);
            late_subs.insert(late_subs.end(), picked.begin(), picked.end());
            late_fault = &f;
        } else {
            supply_faults.push_back(f);
        }
    }
    std::set<std::size_t> silent_set(silent_subs.begin(), silent_subs.end());
    std::set<std::size_t> late_set(late_subs.begin(), late_subs.end());

    Emitter emit;
    Json manifest_faults = Json::array();
    Json crosswalk_entries = Json::object();

    int spread = std::max(1, config.days - 37);

    // billing chain ---------------------------------------------------------
    for (std::size_t i = 0; i < n; ++i) {
        std::string loc = config.locations[i % n_loc];
        bool is_late = late_set.count(i) > 0;
        bool is_silent = silent_set.count(i) > 0;

        Date order_date = is_late ? start + static_cast<int>(i % 5)
                                  : start + static_cast<int>(i % spread);
        Date prov_date = order_date + static_cast<int>(i % 3);

        std::string order_id = "ORD" + pad(i + 1, 7);
        std::string subscriber_id = "SUB" + pad(i + 1, 7);
        std::string circuit = std::to_string(4000000000ULL + i);
        std::string account = loc + circuit;
        crosswalk_entries[circuit] = account;

        std::string status = "active";
        std::string trial = "false";
        if (i % 10 == 7) {
            status = "trial";
            trial = "true";
        } else if (i % 17 == 11) {
            status = "suspended";
        }

        if (config.sources.count("orders")) {
            emit.add("orders", "service_order", order_date, true,
                     {"order_id", "subscriber_id", "status", "trial", "location_id", "event_date"},
                     {order_id, subscriber_id, status, trial, loc, order_date.to_string()});
        }
        if (config.sources.count("provisioning")) {
            emit.add("provisioning", "provisioning_event", prov_date, false,
                     {"order_id", "circuit_id", "location_id", "event_date"},
                     {order_id, circuit, loc, prov_date.to_string()});
        }
        if (is_silent) {
            Json fj;
            fj["kind"] = "silent_mapping_failure";
            fj["key_field"] = "account_id";
            fj["key"] = account;
            fj["subscriber"] = subscriber_id;
            Json exp;
            exp["outcome"] = "exception";
            exp["match_spec"] = "activation_to_billing";
            exp["category"] = "unmatched";
            exp["opened_as_of"] = (prov_date + cycle).to_string();
            fj["expected"] = std::move(exp);
            manifest_faults.push_back(std::move(fj));
            continue;  // no invoice, no payment: the mapping failed upstream
        }

        Date invoice_date = is_late ? prov_date + 10
                                    : prov_date + 3 + static_cast<int>(i % (cycle - 10));
        Date invoice_arrival = invoice_date;
        if (is_late && late_fault) invoice_arrival = invoice_date + late_fault->days;
        if (invoice_arrival > final_day) invoice_arrival = final_day;

        std::string invoice_id = "INV" + pad(i + 1, 7);
        const char* amounts[] = {"59.99", "69.99", "79.99", "99.99"};
        std::string amount = amounts[i % 4];

        if (config.sources.count("billing")) {
            emit.add("billing", "invoice_line", invoice_arrival, true,
                     {"invoice_id", "account_id", "subscriber_id", "amount", "location_id",
                      "event_date"},
                     {invoice_id, account, subscriber_id, amount, loc, invoice_date.to_string()});
        }
        if (is_late) {
            Json fj;
            fj["kind"] = "late_arrival";
            fj["key_field"] = "account_id";
            fj["key"] = account;
            fj["invoice_id"] = invoice_id;
            Json exp;
            exp["outcome"] = "matched_late";
            exp["match_spec"] = "activation_to_billing";
            fj["expected"] = std::move(exp);
            manifest_faults.push_back(std::move(fj));
        }

        if (config.sources.count("payments")) {
            Date payment_date = invoice_date + 1 + static_cast<int>(i % 9);
            Date payment_arrival = payment_date + (invoice_arrival - invoice_date);
            if (payment_arrival > final_day) payment_arrival = final_day;
            emit.add("payments", "payment_settlement", payment_arrival, false,
                     {"payment_ref", "invoice_id", "amount", "event_date"},
                     {"PAY" + pad(i + 1, 7), invoice_id, amount, payment_date.to_string()});
        }
    }

    // supply chain ----------------------------------------------------------
    if (config.sources.count("supply_chain")) {
        const FaultSpec* typo = nullptr;
        const FaultSpec* dup = nullptr;
        const FaultSpec* drift = nullptr;
        for (const auto& f : supply_faults) {
            if (f.kind == "quantity_typo") typo = &f;
            if (f.kind == "duplicate_fanout") dup = &f;
            if (f.kind == "schema_drift") drift = &f;
        }

        std::size_t series_idx = 0;
        for (std::size_t li = 0; li < n_loc; ++li) {
            for (int m = 0; m < config.materials; ++m, ++series_idx) {
                std::string loc = config.locations[li];
                std::string mat_raw = "000" + std::to_string(101 + m);  // leading zeros on purpose
                std::string mat_canon = std::to_string(101 + m);
                std::string po_id = "PO" + loc + std::to_string(101 + m);

                std::int64_t total_qty = 100 + 10 * (config.days - 1);
                emit.add("procurement", "purchase_order", start, false,
                         {"po_id", "material_code", "location_id", "quantity", "amount",
                          "event_date"},
                         {po_id, mat_raw, loc, std::to_string(total_qty),
                          std::to_string(total_qty * 25), start.to_string()});

                bool typo_here = typo && series_idx == 0;
                bool dup_here = dup && series_idx == (n_loc * config.materials > 1 ? 1 : 0);

                for (int d = 0; d < config.days; ++d) {
                    Date day = start + d;
                    std::int64_t qty = d == 0 ? 100 : 10;
                    std::string qty_s = std::to_string(qty);
                    if (typo_here && d == 20) {
                        qty_s = std::to_string(qty * typo->multiplier);
                    }
                    std::vector<std::string> row = {po_id,  mat_raw,
                                                    loc,    qty_s,
                                                    "R" + loc + mat_canon + "-" + pad(d, 3),
                                                    day.to_string()};
                    int copies = (dup_here && d == 5) ? dup->copies : 1;
                    for (int c = 0; c < copies; ++c) {
                        emit.add("warehouse", "receiving", day, true,
                                 {"po_id", "material_code", "location_id", "quantity",
                                  "receipt_no", "event_date"},
                                 row);
                    }
                    if (d > 0) {
                        emit.add("warehouse", "issuance", day, false,
                                 {"po_id", "material_code", "location_id", "quantity", "issue_no",
                                  "event_date"},
                                 {po_id, mat_raw, loc, "10",
                                  "I" + loc + mat_canon + "-" + pad(d, 3), day.to_string()});
                        Date install = day + (d % 3);
                        if (install > final_day) install = final_day;
                        emit.add("field_ops", "installation", install, true,
                                 {"po_id", "material_code", "location_id", "quantity",
                                  "event_date"},
                                 {po_id, mat_raw, loc, "10", install.to_string()});
                    }
                }

                if (typo_here) {
                    Json fj;
                    fj["kind"] = "quantity_typo";
                    fj["key"] = mat_canon + "|" + loc;
                    Json exp;
                    exp["outcome"] = "anomaly_flag";
                    exp["material_id"] = mat_canon;
                    exp["location_id"] = loc;
                    exp["snapshot_date"] = (start + 20).to_string();
                    fj["expected"] = std::move(exp);
                    manifest_faults.push_back(std::move(fj));
                }
                if (dup_here) {
                    Json fj;
                    fj["kind"] = "duplicate_fanout";
                    fj["key"] = po_id + "|" + mat_canon + "|" + loc + "|" +
                                (start + 5).to_string();
                    fj["copies"] = dup->copies;
                    Json exp;
                    exp["outcome"] = "exception";
                    exp["match_spec"] = "dedup:receiving";
                    exp["category"] = "duplicate";
                    exp["count"] = dup->copies - 1;
                    fj["expected"] = std::move(exp);
                    manifest_faults.push_back(std::move(fj));
                }
            }
        }
        (void)drift;
    }

    // schema drift applies to a billing batch: drop or add one column
    for (const auto& f : supply_faults) {
        if (f.kind != "schema_drift") continue;
        Date drift_day = start + 15;
        auto it = emit.batches.find({"billing", "invoice_line", drift_day});
        if (it == emit.batches.end()) continue;
        auto& batch = it->second;
        std::string field = f.field.empty() ? "invoice_id" : f.field;
        if (f.mode == "add") {
            batch.columns.push_back(field.empty() ? "crew_notes" : field);
            for (auto& row : batch.rows) row.push_back("n/a");
        } else {
            auto cit = std::find(batch.columns.begin(), batch.columns.end(), field);
            if (cit != batch.columns.end()) {
                std::size_t idx = static_cast<std::size_t>(cit - batch.columns.begin());
                std::vector<std::string> affected;
                for (auto& row : batch.rows) {
                    affected.push_back(row[0]);
                    row.erase(row.begin() + static_cast<std::ptrdiff_t>(idx));
                }
                batch.columns.erase(cit);
                Json fj;
                fj["kind"] = "schema_drift";
                fj["key"] = "billing|invoice_line|" + drift_day.to_string();
                fj["mode"] = "drop";
                fj["field"] = field;
                Json exp;
                exp["outcome"] = "batch_quarantined";
                exp["records"] = batch.rows.size();
                fj["expected"] = std::move(exp);
                manifest_faults.push_back(std::move(fj));
            }
        }
    }

    // write files -----------------------------------------------------------
    GeneratedScenario out;
    Json index = Json::array();
    for (const auto& [key, batch] : emit.batches) {
        const auto& [source, entity, as_of] = key;
        std::string ext = batch.csv ? ".csv" : ".ndjson";
        fs::path p = out_dir / source / as_of.to_string() / (entity + ext);
        store::write_file_atomic(p, batch.csv ? render_csv(batch) : render_ndjson(batch));
        GeneratedFile gf{source, entity, as_of, p};
        out.files.push_back(gf);
        Json ij;
        ij["source"] = source;
        ij["entity"] = entity;
        ij["as_of"] = as_of.to_string();
        ij["path"] = fs::relative(p, out_dir).string();
        index.push_back(std::move(ij));
    }
    std::sort(out.files.begin(), out.files.end(),
              [](const GeneratedFile& a, const GeneratedFile& b) {
                  if (a.as_of != b.as_of) return a.as_of < b.as_of;
                  if (a.source_id != b.source_id) return a.source_id < b.source_id;
                  return a.entity_kind < b.entity_kind;
              });

    Json crosswalk;
    crosswalk["name"] = "circuit_to_account";
    crosswalk["source_pattern"] = "^[0-9]{10}$";
    crosswalk["target_pattern"] = "^[A-Z]{2}[0-9]{10}$";
    crosswalk["entries"] = std::move(crosswalk_entries);
    out.crosswalk_path = out_dir / "crosswalk_circuit_to_account.json";
    store::write_json_atomic(out.crosswalk_path, crosswalk);

    Json manifest;
    manifest["scenario"] = config.to_json();
    manifest["final_day"] = final_day.to_string();
    manifest["faults"] = std::move(manifest_faults);
    out.manifest_path = out_dir / "manifest.json";
    store::write_json_atomic(out.manifest_path, manifest);

    out.index_path = out_dir / "index.json";
    store::write_json_atomic(out.index_path, index);
    return out;
}

namespace {

// lineage -> staged record lookup over the staged store
std::map<std::string, staging::StagedRecord> load_staged_by_lineage(const store::StoreRoot& root,
                                                                    Date through) {
    std::map<std::string, staging::StagedRecord> out;
    auto dir = root.staged_dir();
    std::error_code ec;
    if (!fs::exists(dir, ec)) return out;
    for (const auto& entity_dir : fs::directory_iterator(dir)) {
        if (!entity_dir.is_directory() || entity_dir.path().filename() == "META") continue;
        for (const auto& day_dir : fs::directory_iterator(entity_dir.path())) {
            auto day = Date::parse_iso(day_dir.path().filename().string());
            if (!day || *day > through) continue;
            for (const auto& j : store::read_ndjson(day_dir.path() / "records.ndjson")) {
                auto rec = staging::StagedRecord::from_json(j);
                out[rec.lineage_id] = std::move(rec);
            }
        }
    }
    return out;
}

struct KindScore {
    std::set<std::string> expected;
    std::set<std::string> detected;
};

Json score_to_json(const KindScore& ks) {
    std::vector<std::string> hits;
    std::set_intersection(ks.expected.begin(), ks.expected.end(), ks.detected.begin(),
                          ks.detected.end(), std::back_inserter(hits));
    Json j;
    j["expected"] = ks.expected.size();
    j["detected"] = ks.detected.size();
    j["true_positives"] = hits.size();
    if (ks.expected.empty()) {
        j["recall"] = 1.0;
    } else {
        j["recall"] = static_cast<double>(hits.size()) / static_cast<double>(ks.expected.size());
    }
    if (ks.detected.empty()) {
        j["precision"] = ks.expected.empty() ? Json(1.0) : Json(nullptr);
    } else {
        j["precision"] =
            static_cast<double>(hits.size()) / static_cast<double>(ks.detected.size());
    }
    return j;
}

}  // namespace

Json score(const store::StoreRoot& root, const Json& manifest, Date as_of) {
    std::map<std::string, KindScore> kinds;
    for (const auto& fj : manifest.at("faults")) {
        std::string kind = fj.at("kind").get<std::string>();
        kinds[kind].expected.insert(fj.at("key").get<std::string>());
    }

    auto staged = load_staged_by_lineage(root, as_of);
    auto field_of = [&](const std::string& lineage, const std::string& field) -> std::string {
        auto it = staged.find(lineage);
        return it == staged.end() ? "" : it->second.field(field);
    };

    recon::ExceptionStore exceptions(root.exceptions_log());
    auto states = exceptions.fold(as_of);
    for (const auto& [id, st] : states) {
        if (st.match_spec == "activation_to_billing" && st.category == "unmatched") {
            auto key = field_of(st.lineage_id, "account_id");
            if (key.empty()) continue;
            if (st.open()) {
                kinds["silent_mapping_failure"].detected.insert(key);
            } else if (st.status == "matched_late") {
                kinds["late_arrival"].detected.insert(key);
            }
        }
        if (st.match_spec == "dedup:receiving" && st.category == "duplicate") {
            std::string key = field_of(st.lineage_id, "po_id") + "|" +
                              field_of(st.lineage_id, "material_code") + "|" +
                              field_of(st.lineage_id, "location_id") + "|" +
                              field_of(st.lineage_id, "event_date");
            kinds["duplicate_fanout"].detected.insert(key);
        }
    }

    inventory::FlagStore flags(root.flags_log());
    for (const auto& [id, f] : flags.fold(as_of)) {
        kinds["quantity_typo"].detected.insert(f.material_id + "|" + f.location_id);
    }

    // schema drift detections come from quarantine reasons
    std::error_code fs_ec;
    auto quarantine_root = root.path() / "quarantine";
    if (fs::exists(quarantine_root, fs_ec)) {
        for (const auto& day_dir : fs::directory_iterator(quarantine_root)) {
            auto day = Date::parse_iso(day_dir.path().filename().string());
            if (!day || *day > as_of) continue;
            for (const auto& j : store::read_ndjson(day_dir.path() / "records.ndjson")) {
                auto rec = staging::StagedRecord::from_json(j);
                if (rec.reason.rfind("schema_drift", 0) == 0) {
                    kinds["schema_drift"].detected.insert(rec.source_id + "|" + rec.entity_kind +
                                                          "|" +
                                                          rec.ingested_as_of.to_string());
                }
            }
        }
    }

    Json out = Json::object();
    for (const auto& [kind, ks] : kinds) out[kind] = score_to_json(ks);
    return out;
}

}  // namespace gera::synth
