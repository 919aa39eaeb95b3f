#include "gera/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gera::inventory {

Json Snapshot::to_json() const {
    Json j;
    j["snapshot_date"] = snapshot_date.to_string();
    j["material_id"] = material_id;
    j["location_id"] = location_id;
    j["quantity_on_hand"] = quantity_on_hand;
    if (quarantined) {
        j["quarantined"] = true;
        j["reason"] = reason;
    }
    return j;
}

Snapshot Snapshot::from_json(const Json& j) {
    Snapshot s;
    s.snapshot_date = Date::parse_iso_or_throw(j.at("snapshot_date").get<std::string>());
    s.material_id = j.at("material_id").get<std::string>();
    s.location_id = j.at("location_id").get<std::string>();
    s.quantity_on_hand = j.at("quantity_on_hand").get<std::int64_t>();
    s.quarantined = j.value("quarantined", false);
    s.reason = j.value("reason", "");
    return s;
}

Json LotAllocation::to_json() const {
    Json j;
    j["material_id"] = material_id;
    j["location_id"] = location_id;
    j["received_date"] = received_date.to_string();
    j["remaining_qty"] = remaining_qty;
    j["bucket"] = bucket;
    return j;
}

LotAllocation LotAllocation::from_json(const Json& j) {
    LotAllocation l;
    l.material_id = j.at("material_id").get<std::string>();
    l.location_id = j.at("location_id").get<std::string>();
    l.received_date = Date::parse_iso_or_throw(j.at("received_date").get<std::string>());
    l.remaining_qty = j.at("remaining_qty").get<std::int64_t>();
    l.bucket = j.at("bucket").get<std::string>();
    return l;
}

std::string bucket_for(std::int64_t age_days) {
    if (age_days <= 30) return "0-30";
    if (age_days <= 60) return "31-60";
    if (age_days <= 90) return "61-90";
    return ">90";
}

std::vector<Snapshot> take_snapshot(Date snapshot_date,
                                    const std::map<SeriesKey, std::vector<Movement>>& movements) {
    std::vector<Snapshot> out;
    for (const auto& [key, moves] : movements) {
        std::int64_t received = 0, issued = 0;
        bool any = false;
        for (const auto& m : moves) {
            if (m.event_date > snapshot_date) continue;
            any = true;
            if (m.is_receipt) {
                received += m.quantity;
            } else {
                issued += m.quantity;
            }
        }
        if (!any) continue;
        Snapshot s;
        s.snapshot_date = snapshot_date;
        s.material_id = key.material_id;
        s.location_id = key.location_id;
        s.quantity_on_hand = received - issued;
        if (s.quantity_on_hand < 0) {
            s.quarantined = true;
            s.reason = "negative_balance";
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LotAllocation> fifo_age(Date snapshot_date, const SeriesKey& key,
                                    const std::vector<Movement>& key_movements) {
    struct Lot {
        Date received;
        std::int64_t qty;
        std::string lineage;
    };
    std::vector<Lot> lots;
    std::int64_t issued = 0;
    for (const auto& m : key_movements) {
        if (m.event_date > snapshot_date) continue;
        if (m.is_receipt) {
            lots.push_back({m.event_date, m.quantity, m.lineage_id});
        } else {
            issued += m.quantity;
        }
    }
    std::sort(lots.begin(), lots.end(), [](const Lot& a, const Lot& b) {
        if (a.received != b.received) return a.received < b.received;
        return a.lineage < b.lineage;
    });

    std::int64_t total = 0;
    for (const auto& l : lots) total += l.qty;
    if (issued > total) return {};  // negative balance: quarantined, no aging

    std::vector<LotAllocation> out;
    for (const auto& lot : lots) {
        std::int64_t consumed = std::min(issued, lot.qty);
        issued -= consumed;
        std::int64_t remaining = lot.qty - consumed;
        if (remaining <= 0) continue;
        LotAllocation alloc;
        alloc.material_id = key.material_id;
        alloc.location_id = key.location_id;
        alloc.received_date = lot.received;
        alloc.remaining_qty = remaining;
        alloc.bucket = bucket_for(snapshot_date - lot.received);
        out.push_back(std::move(alloc));
    }
    return out;
}

DetectorParams DetectorParams::from_json(const Json& j) {
    DetectorParams p;
    p.window_size = j.value("window_size", std::size_t{30});
    p.min_observations = j.value("min_observations", std::size_t{10});
    p.z_threshold = j.value("z_threshold", 3.0);
    p.mad_threshold = j.value("mad_threshold", 3.5);
    p.iqr_k = j.value("iqr_k", 1.5);
    return p;
}

Json DetectorParams::to_json() const {
    Json j;
    j["window_size"] = window_size;
    j["min_observations"] = min_observations;
    j["z_threshold"] = z_threshold;
    j["mad_threshold"] = mad_threshold;
    j["iqr_k"] = iqr_k;
    return j;
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n == 0) return 0;
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

BaselineStats compute_baseline(const std::vector<double>& window) {
    BaselineStats b;
    b.n = window.size();
    if (b.n == 0) return b;

    double sum = 0;
    for (double x : window) sum += x;
    b.mean = sum / static_cast<double>(b.n);
    if (b.n > 1) {
        double ss = 0;
        for (double x : window) ss += (x - b.mean) * (x - b.mean);
        b.stddev = std::sqrt(ss / static_cast<double>(b.n - 1));
    }

    std::vector<double> sorted = window;
    std::sort(sorted.begin(), sorted.end());
    b.median = median_of(sorted);

    std::vector<double> deviations;
    deviations.reserve(b.n);
    for (double x : sorted) deviations.push_back(std::fabs(x - b.median));
    b.mad = median_of(std::move(deviations));

    // median-exclusive halves: odd n drops the middle element
    std::size_t half = b.n / 2;
    std::vector<double> lower(sorted.begin(), sorted.begin() + half);
    std::vector<double> upper(sorted.end() - half, sorted.end());
    b.q1 = median_of(std::move(lower));
    b.q3 = median_of(std::move(upper));

    Json canon = Json::array();
    for (double x : window) canon.push_back(x);
    b.digest = canonical_digest(canon);
    return b;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Evaluation insufficient(const DetectorParams&) {
    Evaluation e;
    e.status = Evaluation::Status::InsufficientHistory;
    return e;
}

}  // namespace

Evaluation evaluate_zscore(const std::vector<double>& window, double x, const DetectorParams& p) {
    if (window.size() < p.min_observations) return insufficient(p);
    auto b = compute_baseline(window);
    Evaluation e;
    e.threshold = p.z_threshold;
    e.baseline_digest = b.digest;
    if (b.stddev == 0) {
        if (x == b.mean) {
            e.score = 0;
            e.status = Evaluation::Status::NotFlagged;
        } else {
            e.score = kInf;
            e.status = Evaluation::Status::Flagged;
        }
        return e;
    }
    e.score = std::fabs((x - b.mean) / b.stddev);
    e.status = e.score > p.z_threshold ? Evaluation::Status::Flagged
                                       : Evaluation::Status::NotFlagged;
    return e;
}

Evaluation evaluate_mad(const std::vector<double>& window, double x, const DetectorParams& p) {
    if (window.size() < p.min_observations) return insufficient(p);
    auto b = compute_baseline(window);
    Evaluation e;
    e.threshold = p.mad_threshold;
    e.baseline_digest = b.digest;
    if (b.mad == 0) {
        if (x == b.median) {
            e.score = 0;
            e.status = Evaluation::Status::NotFlagged;
        } else {
            e.score = kInf;
            e.status = Evaluation::Status::Flagged;
        }
        return e;
    }
    e.score = std::fabs(0.6745 * (x - b.median) / b.mad);
    e.status = e.score > p.mad_threshold ? Evaluation::Status::Flagged
                                         : Evaluation::Status::NotFlagged;
    return e;
}

Evaluation evaluate_iqr(const std::vector<double>& window, double x, const DetectorParams& p) {
    if (window.size() < p.min_observations) return insufficient(p);
    auto b = compute_baseline(window);
    Evaluation e;
    e.threshold = p.iqr_k;
    e.baseline_digest = b.digest;
    double iqr = b.q3 - b.q1;
    if (iqr == 0) {
        if (x >= b.q1 && x <= b.q3) {
            e.score = 0;
            e.status = Evaluation::Status::NotFlagged;
        } else {
            e.score = kInf;
            e.status = Evaluation::Status::Flagged;
        }
        return e;
    }
    // score in units of IQRs beyond the nearer quartile; inside [q1,q3] it is
    // <= 0 and can never flag for any k >= 0
    double above = (x - b.q3) / iqr;
    double below = (b.q1 - x) / iqr;
    e.score = std::max(above, below);
    e.status = e.score > p.iqr_k ? Evaluation::Status::Flagged : Evaluation::Status::NotFlagged;
    return e;
}

std::string flag_id_for(const SeriesKey& key, Date snapshot_date, const std::string& method) {
    return short_id(key.material_id + "|" + key.location_id + "|" + snapshot_date.to_string() +
                    "|" + method);
}

namespace {

Json score_to_json(double score) {
    if (std::isinf(score)) return Json("inf");
    return Json(score);
}

double score_from_json(const Json& j) {
    if (j.is_string()) return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

}  // namespace

std::map<std::string, FlagState> FlagStore::fold(std::optional<Date> through) const {
    std::map<std::string, FlagState> state;
    for (const auto& j : store::read_ndjson(path_)) {
        Date as_of = Date::parse_iso_or_throw(j.at("as_of").get<std::string>());
        if (through && as_of > *through) continue;
        std::string event = j.at("event").get<std::string>();
        if (event == "flag") {
            FlagState f;
            f.flag_id = j.at("flag_id").get<std::string>();
            f.material_id = j.at("material_id").get<std::string>();
            f.location_id = j.at("location_id").get<std::string>();
            f.snapshot_date = Date::parse_iso_or_throw(j.at("snapshot_date").get<std::string>());
            f.method = j.at("method").get<std::string>();
            f.observed = j.at("observed").get<double>();
            f.score = score_from_json(j.at("score"));
            f.threshold = j.at("threshold").get<double>();
            f.baseline_digest = j.at("baseline_digest").get<std::string>();
            state[f.flag_id] = std::move(f);
        } else if (event == "disposition") {
            auto it = state.find(j.at("flag_id").get<std::string>());
            if (it != state.end()) {
                it->second.disposition = j.at("disposition").get<std::string>();
                it->second.note = j.value("note", "");
            }
        }
    }
    return state;
}

bool FlagStore::record_flag(std::map<std::string, FlagState>& state, const SeriesKey& key,
                            Date snapshot_date, const std::string& method, double observed,
                            const Evaluation& eval, Date as_of) {
    auto id = flag_id_for(key, snapshot_date, method);
    if (state.count(id)) return false;
    Json j;
    j["event"] = "flag";
    j["flag_id"] = id;
    j["material_id"] = key.material_id;
    j["location_id"] = key.location_id;
    j["snapshot_date"] = snapshot_date.to_string();
    j["method"] = method;
    j["observed"] = observed;
    j["score"] = score_to_json(eval.score);
    j["threshold"] = eval.threshold;
    j["baseline_digest"] = eval.baseline_digest;
    j["as_of"] = as_of.to_string();
    store::append_line(path_, j.dump());

    FlagState f;
    f.flag_id = id;
    f.material_id = key.material_id;
    f.location_id = key.location_id;
    f.snapshot_date = snapshot_date;
    f.method = method;
    f.observed = observed;
    f.score = eval.score;
    f.threshold = eval.threshold;
    f.baseline_digest = eval.baseline_digest;
    state[id] = std::move(f);
    return true;
}

void FlagStore::set_disposition(const std::string& flag_id, const std::string& disposition,
                                const std::string& note, Date as_of) {
    if (disposition != "confirmed" && disposition != "false_positive") {
        throw ValidationError("disposition must be confirmed or false_positive");
    }
    auto state = fold();
    if (!state.count(flag_id)) {
        throw ValidationError("unknown flag id: " + flag_id);
    }
    Json j;
    j["event"] = "disposition";
    j["flag_id"] = flag_id;
    j["disposition"] = disposition;
    if (!note.empty()) j["note"] = note;
    j["as_of"] = as_of.to_string();
    store::append_line(path_, j.dump());
}

std::vector<QueueEntry> investigation_queue(const std::map<std::string, FlagState>& flags) {
    std::vector<QueueEntry> out;
    for (const auto& [id, f] : flags) {
        if (f.disposition != "open") continue;  // history retained, queue excludes
        QueueEntry e;
        e.flag = f;
        e.normalized_score = f.threshold > 0 ? f.score / f.threshold : f.score;
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const QueueEntry& a, const QueueEntry& b) {
        if (a.normalized_score != b.normalized_score) {
            return a.normalized_score > b.normalized_score;
        }
        if (a.flag.snapshot_date != b.flag.snapshot_date) {
            return a.flag.snapshot_date < b.flag.snapshot_date;
        }
        if (a.flag.material_id != b.flag.material_id) return a.flag.material_id < b.flag.material_id;
        if (a.flag.location_id != b.flag.location_id) return a.flag.location_id < b.flag.location_id;
        return a.flag.method < b.flag.method;
    });
    return out;
}

}  // namespace gera::inventory
