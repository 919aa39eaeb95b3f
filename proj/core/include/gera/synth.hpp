#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/store.hpp"

namespace gera::synth {

struct FaultSpec {
    std::string kind;  // silent_mapping_failure | late_arrival | duplicate_fanout |
                       // schema_drift | quantity_typo
    std::size_t count = 1;
    int days = 30;        // late_arrival: arrival delay
    int copies = 2;       // duplicate_fanout: total emitted copies
    std::string mode;     // schema_drift: drop | add
    std::string field;    // schema_drift
    int multiplier = 10;  // quantity_typo
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::size_t subscribers = 100;
    Date start_date;
    int days = 60;
    int billing_cycle_days = 30;
    std::vector<std::string> locations = {"NW", "SW"};  // two-letter region codes
    int materials = 4;
    std::set<std::string> sources = {"orders", "provisioning", "billing", "payments"};
    std::vector<FaultSpec> faults;

    static ScenarioConfig from_json(const Json& j);
    Json to_json() const;
};

// Everything needed to drive ingестion, in deterministic load order.
struct GeneratedFile {
    std::string source_id;
    std::string entity_kind;
    Date as_of;
    store::fs::path path;
};

struct GeneratedScenario {
    std::vector<GeneratedFile> files;
    store::fs::path manifest_path;
    store::fs::path crosswalk_path;
    store::fs::path index_path;
};

// Identical (config, seed) produce byte-identical files. Consistent records
// for clean subscribers; each injected fault lands in the ground-truth
// manifest with expected engine outcomes keyed by natural identifiers.
GeneratedScenario generate(const ScenarioConfig& config, const store::fs::path& out_dir);

// recall/precision per fault kind, on natural keys, against an engine store
// that has been run through as_of.
Json score(const store::StoreRoot& root, const Json& manifest, Date as_of);

}  // namespace gera::synth
