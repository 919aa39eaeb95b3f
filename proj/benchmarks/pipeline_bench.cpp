#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gera/inventory.hpp"
#include "gera/reconcile.hpp"
#include "gera/staging.hpp"

using namespace gera;

namespace {

std::vector<staging::StagedRecord> make_records(std::size_t n, const std::string& entity,
                                                const std::string& key_field,
                                                const std::string& prefix, int date_spread) {
    std::vector<staging::StagedRecord> out;
    out.reserve(n);
    Date base = Date::parse_iso_or_throw("2026-01-01");
    for (std::size_t i = 0; i < n; ++i) {
        staging::StagedRecord rec;
        rec.lineage_id = prefix + std::to_string(i);
        rec.entity_kind = entity;
        rec.event_date = base + static_cast<std::int64_t>(i % date_spread);
        rec.ingested_as_of = rec.event_date;
        rec.fields[key_field] = "K" + std::to_string(i);
        rec.fields["event_date"] = rec.event_date.to_string();
        out.push_back(std::move(rec));
    }
    return out;
}

void BM_RunMatch(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    auto lefts = make_records(n, "invoice_line", "invoice_id", "L", 20);
    auto rights = make_records(n, "payment_settlement", "invoice_id", "R", 20);
    // rights share keys with lefts
    for (std::size_t i = 0; i < n; ++i) rights[i].fields["invoice_id"] = "K" + std::to_string(i);
    std::vector<const staging::StagedRecord*> lp, rp;
    for (const auto& r : lefts) lp.push_back(&r);
    for (const auto& r : rights) rp.push_back(&r);
    recon::MatchSpec spec;
    spec.name = "bench";
    spec.left_entity = "invoice_line";
    spec.right_entity = "payment_settlement";
    spec.keys = {"invoice_id"};
    spec.window_days = 30;
    Date as_of = Date::parse_iso_or_throw("2026-03-01");
    for (auto _ : state) {
        auto outcome = recon::run_match(spec, lp, rp, as_of);
        benchmark::DoNotOptimize(outcome.matched.size());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * 2);
}
BENCHMARK(BM_RunMatch)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_Detectors(benchmark::State& state) {
    std::mt19937_64 rng(7);
    std::vector<double> window;
    for (int i = 0; i < 30; ++i) window.push_back(100.0 + static_cast<double>(rng() % 10));
    inventory::DetectorParams params;
    for (auto _ : state) {
        auto z = inventory::evaluate_zscore(window, 140.0, params);
        auto m = inventory::evaluate_mad(window, 140.0, params);
        auto q = inventory::evaluate_iqr(window, 140.0, params);
        benchmark::DoNotOptimize(z.score + m.score + q.score);
    }
}
BENCHMARK(BM_Detectors);

void BM_FifoAge(benchmark::State& state) {
    auto n = static_cast<std::size_t>(state.range(0));
    std::vector<inventory::Movement> moves;
    Date base = Date::parse_iso_or_throw("2026-01-01");
    for (std::size_t i = 0; i < n; ++i) {
        inventory::Movement m;
        m.event_date = base + static_cast<std::int64_t>(i);
        m.lineage_id = "m" + std::to_string(i);
        m.quantity = i % 3 == 0 ? 20 : 10;
        m.is_receipt = i % 3 != 2;
        moves.push_back(std::move(m));
    }
    inventory::SeriesKey key{"101", "NW"};
    Date snap = base + static_cast<std::int64_t>(n);
    for (auto _ : state) {
        auto lots = inventory::fifo_age(snap, key, moves);
        benchmark::DoNotOptimize(lots.size());
    }
}
BENCHMARK(BM_FifoAge)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
