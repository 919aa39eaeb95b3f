#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/config_defaults.hpp"
#include "gera/governance.hpp"
#include "gera/ingest.hpp"
#include "gera/inventory.hpp"
#include "gera/reconcile.hpp"
#include "gera/semantic.hpp"
#include "gera/staging.hpp"
#include "gera/store.hpp"

namespace gera::pipeline {

struct RunSummary {
    Date as_of;
    int days_processed = 0;
    std::size_t batches_staged = 0;
    std::size_t records_pass = 0;
    std::size_t records_quarantined = 0;
    std::size_t exceptions_opened = 0;
    std::size_t exceptions_resolved = 0;
    std::size_t flags_raised = 0;
};

// Orchestrates the store day by day. All behavior keys off caller-supplied
// logical dates; a run replays each unprocessed day in order so that daily
// runs and one catch-up run produce byte-identical stores.
class Engine {
public:
    explicit Engine(store::StoreRoot root);

    // Stages, reconciles, snapshots, detects, and ages through as_of.
    // lookback bounds how many days before as_of a first-ever run reaches
    // back; resumed runs continue from saved state.
    RunSummary run(Date as_of, int lookback_days = 35);

    // Pure report builders (system view, no audit, no RLS).
    Json recon_report(Date as_of);
    Json aging_report(Date as_of);
    static std::string recon_report_text(const Json& report);
    static std::string aging_report_text(const Json& report);

    // Governed reads: RLS-filtered where rows carry territory, and exactly
    // one audit event per call.
    Json exceptions_list(Date as_of, const governance::Principal& principal);
    Json flags_list(Date as_of, const governance::Principal& principal);
    Json recon_report_governed(Date as_of, const governance::Principal& principal);
    Json aging_report_governed(Date as_of, const governance::Principal& principal);

    // One evaluate_metric audit event per metric evaluated.
    Json metric_eval(const std::string& name, Date as_of, const governance::Principal& principal);
    std::vector<Json> metrics_report(Date as_of, const governance::Principal& principal);

    void exception_resolve(const std::string& id, const std::string& note,
                           const std::string& owner, Date as_of);
    void exception_assign(const std::string& id, const std::string& owner, Date as_of);
    void flag_disposition(const std::string& flag_id, const std::string& disposition,
                          const std::string& note, Date as_of);

    const config::EngineConfig& config() const { return config_; }
    const store::StoreRoot& root() const { return root_; }
    std::optional<Date> last_processed() const;

private:
    struct DayOutcome;

    void stage_day(Date d, RunSummary& summary);
    void reconcile_day(Date d, RunSummary& summary);
    void inventory_day(Date d, RunSummary& summary);

    void load_staged_from_disk();
    void load_snapshot_history();
    std::vector<const staging::StagedRecord*> visible(const std::string& entity, Date d) const;
    std::vector<const staging::StagedRecord*> deduped_visible(const std::string& entity, Date d,
                                                              std::vector<const staging::StagedRecord*>* dups);

    std::map<inventory::SeriesKey, std::vector<inventory::Movement>> movements_through(Date d);
    void require_processed_through(Date as_of) const;

    std::vector<Json> recon_status_rows(Date as_of);
    Json metric_result(const std::string& name, Date as_of,
                       const governance::Principal& principal, std::uint64_t* rows_out);

    store::StoreRoot root_;
    config::EngineConfig config_;
    governance::AuditLog audit_;
    recon::ExceptionStore exceptions_;
    inventory::FlagStore flags_;

    // staged pass records by entity, each vector in staging order
    std::map<std::string, std::vector<staging::StagedRecord>> staged_;
    bool staged_loaded_ = false;
    staging::ReferentialIndex referential_;

    std::map<inventory::SeriesKey, std::vector<std::pair<Date, std::int64_t>>> history_;
    bool history_loaded_ = false;
};

}  // namespace gera::pipeline
