#pragma once

#include <map>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/governance.hpp"
#include "gera/inventory.hpp"
#include "gera/reconcile.hpp"
#include "gera/semantic.hpp"
#include "gera/staging.hpp"
#include "gera/store.hpp"

namespace gera::config {

// Everything a run needs, loaded from config/ and metrics/ with content
// digests recorded for lineage.
struct EngineConfig {
    staging::NormalizationRuleSet rules;
    std::map<std::string, staging::Crosswalk> crosswalks;
    staging::SchemaCatalog schemas;
    staging::QualityAssertionSet assertions;
    std::vector<recon::MatchSpec> matchspecs;  // sorted by name
    int escalation_days = 14;
    inventory::DetectorParams anomaly;
    governance::PolicySet policies;
    semantic::SourceCatalog catalog;
    semantic::Registry registry;
    std::vector<std::string> ingest_date_formats;
};

// Writes any missing config/metric files with the shipped defaults; existing
// files are never touched.
void materialize_defaults(const store::StoreRoot& root);

EngineConfig load(const store::StoreRoot& root);

}  // namespace gera::config
