#include "gera/ingest.hpp"

#include <algorithm>
#include <map>

#include "gera/csv.hpp"

namespace gera::ingest {

namespace fs = store::fs;

const std::vector<std::string>& entity_kinds() {
    static const std::vector<std::string> kinds = {
        "service_order",  "provisioning_event", "invoice_line",
        "payment_settlement", "purchase_order", "receiving",
        "issuance",       "installation",       "inventory_movement",
    };
    return kinds;
}

bool is_entity_kind(const std::string& kind) {
    const auto& ks = entity_kinds();
    return std::find(ks.begin(), ks.end(), kind) != ks.end();
}

const std::vector<std::string>& RawStore::default_date_formats() {
    static const std::vector<std::string> formats = {"YYYY-MM-DD", "MM/DD/YYYY"};
    return formats;
}

Json RawRecord::to_json() const {
    Json j;
    j["lineage_id"] = lineage_id;
    j["source_id"] = source_id;
    j["entity_kind"] = entity_kind;
    j["event_date"] = event_date.to_string();
    j["ingested_as_of"] = ingested_as_of.to_string();
    j["batch_hash"] = batch_hash;
    Json payload_j = Json::object();
    for (const auto& [k, v] : payload) payload_j[k] = v;
    j["payload"] = std::move(payload_j);
    return j;
}

RawRecord RawRecord::from_json(const Json& j) {
    RawRecord r;
    r.lineage_id = j.at("lineage_id").get<std::string>();
    r.source_id = j.at("source_id").get<std::string>();
    r.entity_kind = j.at("entity_kind").get<std::string>();
    r.event_date = Date::parse_iso_or_throw(j.at("event_date").get<std::string>());
    r.ingested_as_of = Date::parse_iso_or_throw(j.at("ingested_as_of").get<std::string>());
    r.batch_hash = j.at("batch_hash").get<std::string>();
    for (const auto& [k, v] : j.at("payload").items()) {
        r.payload.emplace_back(k, v.get<std::string>());
    }
    return r;
}

namespace {

struct ManifestEntry {
    std::string batch_hash;
    std::string source_id;
    std::string entity_kind;
    Date as_of;
    std::string file;
    std::size_t records = 0;
    std::string file_digest;
    std::uint64_t seq = 0;
};

struct Manifest {
    std::vector<ManifestEntry> batches;  // kept in seq order
    std::uint64_t next_seq = 1;

    const ManifestEntry* find(const std::string& batch_hash) const {
        for (const auto& e : batches) {
            if (e.batch_hash == batch_hash) return &e;
        }
        return nullptr;
    }
};

Manifest load_manifest(const store::StoreRoot& root) {
    Manifest m;
    auto content = store::read_file_if_exists(root.raw_manifest());
    if (!content) return m;
    Json j = Json::parse(*content);
    m.next_seq = j.value("next_seq", std::uint64_t{1});
    for (const auto& bj : j.at("batches")) {
        ManifestEntry e;
        e.batch_hash = bj.at("batch_hash").get<std::string>();
        e.source_id = bj.at("source_id").get<std::string>();
        e.entity_kind = bj.at("entity_kind").get<std::string>();
        e.as_of = Date::parse_iso_or_throw(bj.at("as_of").get<std::string>());
        e.file = bj.at("file").get<std::string>();
        e.records = bj.at("records").get<std::size_t>();
        e.file_digest = bj.at("file_digest").get<std::string>();
        e.seq = bj.at("seq").get<std::uint64_t>();
        m.batches.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const store::StoreRoot& root, const Manifest& m) {
    Json j;
    j["next_seq"] = m.next_seq;
    Json arr = Json::array();
    for (const auto& e : m.batches) {
        Json bj;
        bj["batch_hash"] = e.batch_hash;
        bj["source_id"] = e.source_id;
        bj["entity_kind"] = e.entity_kind;
        bj["as_of"] = e.as_of.to_string();
        bj["file"] = e.file;
        bj["records"] = e.records;
        bj["file_digest"] = e.file_digest;
        bj["seq"] = e.seq;
        arr.push_back(std::move(bj));
    }
    j["batches"] = std::move(arr);
    store::write_json_atomic(root.raw_manifest(), j);
}

Date parse_event_date(const std::string& value, const std::vector<std::string>& formats,
                      std::size_t row, const std::string& where) {
    for (const auto& f : formats) {
        if (auto d = Date::parse_pattern(value, f)) return *d;
    }
    throw ValidationError("batch rejected: " + where + " row " + std::to_string(row) +
                          ": event_date \"" + value + "\" matches none of the declared formats");
}

std::string scalar_to_string(const Json& v, std::size_t line) {
    switch (v.type()) {
        case Json::value_t::string:
            return v.get<std::string>();
        case Json::value_t::boolean:
        case Json::value_t::number_integer:
        case Json::value_t::number_unsigned:
        case Json::value_t::number_float:
            return v.dump();
        case Json::value_t::null:
            return "";
        default:
            throw ValidationError("batch rejected: line " + std::to_string(line) +
                                  ": nested values are not accepted in source extracts");
    }
}

std::vector<std::vector<std::pair<std::string, std::string>>> parse_rows(
    std::string_view bytes, bool is_csv) {
    std::vector<std::vector<std::pair<std::string, std::string>>> rows;
    if (is_csv) {
        auto table = csv::parse(bytes);
        for (const auto& row : table.rows) {
            std::vector<std::pair<std::string, std::string>> payload;
            payload.reserve(row.size());
            for (std::size_t i = 0; i < row.size(); ++i) {
                payload.emplace_back(table.header[i], row[i]);
            }
            rows.push_back(std::move(payload));
        }
        return rows;
    }
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < bytes.size()) {
        auto end = bytes.find('\n', start);
        if (end == std::string_view::npos) end = bytes.size();
        ++line_no;
        std::string_view line = bytes.substr(start, end - start);
        start = end + 1;
        if (trim(line).empty()) continue;
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ValidationError("batch rejected: line " + std::to_string(line_no) +
                                  ": invalid ndjson: " + e.what());
        }
        if (!obj.is_object()) {
            throw ValidationError("batch rejected: line " + std::to_string(line_no) +
                                  ": expected an object per line");
        }
        std::vector<std::pair<std::string, std::string>> payload;
        for (const auto& [k, v] : obj.items()) {
            payload.emplace_back(k, scalar_to_string(v, line_no));
        }
        rows.push_back(std::move(payload));
    }
    return rows;
}

}  // namespace

IngestReceipt RawStore::load_batch(const fs::path& file, const std::string& source_id,
                                   const std::string& entity_kind, Date as_of,
                                   const std::vector<std::string>& date_formats) {
    auto bytes = store::read_file(file);
    auto ext = to_lower(file.extension().string());
    bool is_csv = ext != ".ndjson" && ext != ".jsonl" && ext != ".json";
    return load_batch_text(bytes, is_csv, source_id, entity_kind, as_of, date_formats);
}

IngestReceipt RawStore::load_batch_text(std::string_view bytes, bool is_csv,
                                        const std::string& source_id,
                                        const std::string& entity_kind, Date as_of,
                                        const std::vector<std::string>& date_formats) {
    if (!is_entity_kind(entity_kind)) {
        throw ValidationError("unknown entity_kind: \"" + entity_kind + "\"");
    }
    if (source_id.empty() || source_id.find('/') != std::string::npos) {
        throw ValidationError("bad source_id: \"" + source_id + "\"");
    }

    // Batch identity covers source and entity so byte-identical extracts from
    // different systems stay distinct batches.
    std::string batch_hash =
        sha256_hex(source_id + "\n" + entity_kind + "\n" + std::string(bytes));

    store::FileLock lock(root_.raw_dir() / ".ingest.lock");
    Manifest manifest = load_manifest(root_);
    if (const auto* prior = manifest.find(batch_hash)) {
        return IngestReceipt{batch_hash, 0, source_id, as_of, prior->batch_hash};
    }

    auto payloads = parse_rows(bytes, is_csv);

    std::string file_name = "batch-" + batch_hash.substr(0, 16) + ".ndjson";
    std::string where = source_id + "/" + as_of.to_string();

    std::string ndjson;
    std::size_t row_no = 0;
    for (auto& payload : payloads) {
        ++row_no;
        RawRecord rec;
        rec.lineage_id = short_id(batch_hash + ":" + std::to_string(row_no));
        rec.source_id = source_id;
        rec.entity_kind = entity_kind;
        rec.ingested_as_of = as_of;
        rec.batch_hash = batch_hash;
        std::string event_date_raw;
        for (const auto& [k, v] : payload) {
            if (k == "event_date") event_date_raw = v;
        }
        if (event_date_raw.empty()) {
            throw ValidationError("batch rejected: " + where + " row " + std::to_string(row_no) +
                                  ": missing event_date");
        }
        rec.event_date = parse_event_date(event_date_raw, date_formats, row_no, where);
        rec.payload = std::move(payload);
        ndjson += rec.to_json().dump();
        ndjson += '\n';
    }

    auto partition_dir = root_.raw_partition(source_id, as_of);
    store::write_file_atomic(partition_dir / file_name, ndjson);

    ManifestEntry entry;
    entry.batch_hash = batch_hash;
    entry.source_id = source_id;
    entry.entity_kind = entity_kind;
    entry.as_of = as_of;
    entry.file = file_name;
    entry.records = row_no;
    entry.file_digest = sha256_hex(ndjson);
    entry.seq = manifest.next_seq++;
    manifest.batches.push_back(entry);
    save_manifest(root_, manifest);

    return IngestReceipt{batch_hash, row_no, source_id, as_of, std::nullopt};
}

std::vector<RawRecord> RawStore::replay(Date from, Date to,
                                        const std::optional<std::string>& source_id) const {
    Manifest manifest = load_manifest(root_);
    std::vector<const ManifestEntry*> selected;
    for (const auto& e : manifest.batches) {
        if (e.as_of < from || e.as_of > to) continue;
        if (source_id && e.source_id != *source_id) continue;
        selected.push_back(&e);
    }
    std::sort(selected.begin(), selected.end(), [](const ManifestEntry* a, const ManifestEntry* b) {
        if (a->as_of != b->as_of) return a->as_of < b->as_of;
        return a->seq < b->seq;
    });

    std::vector<RawRecord> out;
    for (const auto* e : selected) {
        auto path = root_.raw_partition(e->source_id, e->as_of) / e->file;
        auto content = store::read_file_if_exists(path);
        std::string partition = e->source_id + "/" + e->as_of.to_string();
        if (!content) {
            throw IntegrityError("partition " + partition + ": batch file missing: " + e->file);
        }
        if (sha256_hex(*content) != e->file_digest) {
            throw IntegrityError("partition " + partition + ": digest mismatch in " + e->file);
        }
        std::size_t start = 0;
        while (start < content->size()) {
            auto end = content->find('\n', start);
            if (end == std::string::npos) end = content->size();
            std::string_view line(content->data() + start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            out.push_back(RawRecord::from_json(Json::parse(line)));
        }
    }
    return out;
}

IntegrityReport RawStore::verify() const {
    Manifest manifest = load_manifest(root_);
    IntegrityReport report;
    std::map<std::string, bool> partitions;
    for (const auto& e : manifest.batches) {
        std::string partition = e.source_id + "/" + e.as_of.to_string();
        partitions[partition] = true;
        auto path = root_.raw_partition(e.source_id, e.as_of) / e.file;
        auto content = store::read_file_if_exists(path);
        if (!content) {
            report.mismatches.push_back({partition, e.file, "batch file missing"});
            continue;
        }
        if (sha256_hex(*content) != e.file_digest) {
            report.mismatches.push_back({partition, e.file, "content digest mismatch"});
        }
    }
    report.partitions_checked = partitions.size();
    return report;
}

std::vector<RawStore::BatchInfo> RawStore::list_batches() const {
    Manifest manifest = load_manifest(root_);
    std::vector<BatchInfo> out;
    for (const auto& e : manifest.batches) {
        out.push_back({e.batch_hash, e.source_id, e.entity_kind, e.as_of, e.seq, e.records});
    }
    std::sort(out.begin(), out.end(),
              [](const BatchInfo& a, const BatchInfo& b) { return a.seq < b.seq; });
    return out;
}

std::vector<RawRecord> RawStore::read_batch(const BatchInfo& info) const {
    Manifest manifest = load_manifest(root_);
    const auto* e = manifest.find(info.batch_hash);
    if (!e) throw IntegrityError("batch not in manifest: " + info.batch_hash);
    auto path = root_.raw_partition(e->source_id, e->as_of) / e->file;
    auto content = store::read_file_if_exists(path);
    std::string partition = e->source_id + "/" + e->as_of.to_string();
    if (!content) {
        throw IntegrityError("partition " + partition + ": batch file missing: " + e->file);
    }
    if (sha256_hex(*content) != e->file_digest) {
        throw IntegrityError("partition " + partition + ": digest mismatch in " + e->file);
    }
    std::vector<RawRecord> out;
    std::size_t start = 0;
    while (start < content->size()) {
        auto end = content->find('\n', start);
        if (end == std::string::npos) end = content->size();
        std::string_view line(content->data() + start, end - start);
        start = end + 1;
        if (line.empty()) continue;
        out.push_back(RawRecord::from_json(Json::parse(line)));
    }
    return out;
}

std::optional<std::pair<Date, Date>> RawStore::partition_date_range() const {
    Manifest manifest = load_manifest(root_);
    if (manifest.batches.empty()) return std::nullopt;
    Date lo = manifest.batches.front().as_of;
    Date hi = lo;
    for (const auto& e : manifest.batches) {
        lo = std::min(lo, e.as_of);
        hi = std::max(hi, e.as_of);
    }
    return std::make_pair(lo, hi);
}

}  // namespace gera::ingest
