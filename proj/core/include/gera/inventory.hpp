#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gera/common.hpp"
#include "gera/store.hpp"

namespace gera::inventory {

struct SeriesKey {
    std::string material_id;
    std::string location_id;
    auto operator<=>(const SeriesKey&) const = default;
};

struct Movement {
    Date event_date;
    std::string lineage_id;
    std::int64_t quantity = 0;
    bool is_receipt = false;
};

struct Snapshot {
    Date snapshot_date;
    std::string material_id;
    std::string location_id;
    std::int64_t quantity_on_hand = 0;
    bool quarantined = false;  // negative computed balance, excluded from aging
    std::string reason;

    Json to_json() const;
    static Snapshot from_json(const Json& j);
};

struct LotAllocation {
    std::string material_id;
    std::string location_id;
    Date received_date;
    std::int64_t remaining_qty = 0;
    std::string bucket;  // 0-30 | 31-60 | 61-90 | >90

    Json to_json() const;
    static LotAllocation from_json(const Json& j);
};

// Full day balance per key through snapshot_date; keys without any movement
// history produce no row (absence, not zero).
std::vector<Snapshot> take_snapshot(Date snapshot_date,
                                    const std::map<SeriesKey, std::vector<Movement>>& movements);

// Issuances consume receipt lots oldest-first; surviving units bucket by
// age_days = snapshot_date - received_date with inclusive upper bounds.
// Returns nothing for keys whose issuances exceed receipts (negative-balance
// quarantine, consistent with take_snapshot).
std::vector<LotAllocation> fifo_age(Date snapshot_date, const SeriesKey& key,
                                    const std::vector<Movement>& key_movements);

std::string bucket_for(std::int64_t age_days);

// ---- anomaly detection ------------------------------------------------

struct DetectorParams {
    std::size_t window_size = 30;
    std::size_t min_observations = 10;
    double z_threshold = 3.0;
    double mad_threshold = 3.5;
    double iqr_k = 1.5;

    static DetectorParams from_json(const Json& j);
    Json to_json() const;
};

struct BaselineStats {
    std::size_t n = 0;
    double mean = 0, stddev = 0;
    double median = 0, mad = 0;
    double q1 = 0, q3 = 0;
    std::string digest;  // canonical digest of the window observations
};

// Statistics recomputed from the stored window, never incrementally drifted.
// stddev is the sample (n-1) estimator; quartiles use median-exclusive halves.
BaselineStats compute_baseline(const std::vector<double>& window);

struct Evaluation {
    enum class Status { Flagged, NotFlagged, InsufficientHistory };
    Status status = Status::NotFlagged;
    double score = 0;  // may be +inf when the spread statistic is zero
    double threshold = 0;
    std::string baseline_digest;
};

// Baseline = trailing window excluding the evaluated point.
Evaluation evaluate_zscore(const std::vector<double>& window, double x, const DetectorParams& p);
Evaluation evaluate_mad(const std::vector<double>& window, double x, const DetectorParams& p);
Evaluation evaluate_iqr(const std::vector<double>& window, double x, const DetectorParams& p);

// ---- flag store --------------------------------------------------------

struct FlagState {
    std::string flag_id;
    std::string material_id;
    std::string location_id;
    Date snapshot_date;
    std::string method;  // zscore | mad | iqr
    double observed = 0;
    double score = 0;
    double threshold = 0;
    std::string baseline_digest;
    std::string disposition = "open";  // open | confirmed | false_positive
    std::string note;
};

std::string flag_id_for(const SeriesKey& key, Date snapshot_date, const std::string& method);

class FlagStore {
public:
    explicit FlagStore(store::fs::path log_path) : path_(std::move(log_path)) {}

    std::map<std::string, FlagState> fold(std::optional<Date> through = std::nullopt) const;

    // Appends only new flags; reruns are byte-identical.
    bool record_flag(std::map<std::string, FlagState>& state, const SeriesKey& key,
                     Date snapshot_date, const std::string& method, double observed,
                     const Evaluation& eval, Date as_of);
    void set_disposition(const std::string& flag_id, const std::string& disposition,
                         const std::string& note, Date as_of);

private:
    store::fs::path path_;
};

// Open flags ordered by (normalized score desc, snapshot_date asc, series, method).
struct QueueEntry {
    FlagState flag;
    double normalized_score = 0;  // score / threshold
};
std::vector<QueueEntry> investigation_queue(const std::map<std::string, FlagState>& flags);

}  // namespace gera::inventory
