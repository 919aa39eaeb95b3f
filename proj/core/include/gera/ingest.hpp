#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gera/common.hpp"
#include "gera/store.hpp"

namespace gera::ingest {

// Entity kinds accepted by the pipeline.
const std::vector<std::string>& entity_kinds();
bool is_entity_kind(const std::string& kind);

// One ingested row, held verbatim. Payload preserves the source's field
// names, order, and raw string values. Never mutated after the write.
struct RawRecord {
    std::string lineage_id;
    std::string source_id;
    std::string entity_kind;
    Date event_date;
    Date ingested_as_of;
    std::string batch_hash;
    std::vector<std::pair<std::string, std::string>> payload;

    Json to_json() const;
    static RawRecord from_json(const Json& j);
};

struct IngestReceipt {
    std::string batch_hash;
    std::size_t records_written = 0;
    std::string source_id;
    Date as_of;
    std::optional<std::string> duplicate_of;
};

struct IntegrityFinding {
    std::string partition;  // "<source_id>/<as_of>"
    std::string file;
    std::string detail;
};

struct IntegrityReport {
    std::size_t partitions_checked = 0;
    std::vector<IntegrityFinding> mismatches;
    bool ok() const { return mismatches.empty(); }
};

// Layer A store. Batches land as immutable NDJSON partition files plus a
// manifest of per-file content digests; replay is byte-faithful and ordered.
class RawStore {
public:
    explicit RawStore(store::StoreRoot root) : root_(std::move(root)) {}

    // All-or-nothing: any unparseable row rejects the whole batch with
    // line diagnostics. Reloading byte-identical content writes nothing
    // and reports the prior batch via duplicate_of.
    IngestReceipt load_batch(const store::fs::path& file, const std::string& source_id,
                             const std::string& entity_kind, Date as_of,
                             const std::vector<std::string>& date_formats = default_date_formats());

    IngestReceipt load_batch_text(std::string_view bytes, bool is_csv, const std::string& source_id,
                                  const std::string& entity_kind, Date as_of,
                                  const std::vector<std::string>& date_formats = default_date_formats());

    // Records in (as_of, load order) sequence for partitions in [from, to].
    // Missing partitions contribute nothing; a digest mismatch throws
    // IntegrityError naming the partition.
    std::vector<RawRecord> replay(Date from, Date to,
                                  const std::optional<std::string>& source_id = std::nullopt) const;

    IntegrityReport verify() const;

    // Earliest/latest ingested_as_of present, if any batch was loaded.
    std::optional<std::pair<Date, Date>> partition_date_range() const;

    struct BatchInfo {
        std::string batch_hash;
        std::string source_id;
        std::string entity_kind;
        Date as_of;
        std::uint64_t seq = 0;
        std::size_t records = 0;
    };
    std::vector<BatchInfo> list_batches() const;  // in load (seq) order
    std::vector<RawRecord> read_batch(const BatchInfo& info) const;  // digest-checked

    static const std::vector<std::string>& default_date_formats();

private:
    store::StoreRoot root_;
};

}  // namespace gera::ingest
