#include "doctest.h"
#include "gera/common.hpp"

using namespace gera;

namespace {

// independent day-stepping oracle: walks the calendar one day at a time
struct Ymd {
    int y;
    unsigned m, d;
};

bool oracle_is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned oracle_days_in_month(int y, unsigned m) {
    static const unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && oracle_is_leap(y)) return 29;
    return lengths[m - 1];
}

Ymd oracle_add_days(Ymd start, int days) {
    Ymd cur = start;
    for (int i = 0; i < days; ++i) {
        if (++cur.d > oracle_days_in_month(cur.y, cur.m)) {
            cur.d = 1;
            if (++cur.m > 12) {
                cur.m = 1;
                ++cur.y;
            }
        }
    }
    return cur;
}

}  // namespace

TEST_CASE("date parses and formats ISO") {
    auto d = Date::parse_iso("2026-01-02");
    REQUIRE(d.has_value());
    CHECK(d->year() == 2026);
    CHECK(d->month() == 1);
    CHECK(d->day() == 2);
    CHECK(d->to_string() == "2026-01-02");

    CHECK_FALSE(Date::parse_iso("2026-13-01").has_value());
    CHECK_FALSE(Date::parse_iso("2026-02-30").has_value());
    CHECK_FALSE(Date::parse_iso("2026/01/02").has_value());
    CHECK_FALSE(Date::parse_iso("garbage").has_value());
}

TEST_CASE("date pattern parsing follows declared formats only") {
    auto d = Date::parse_pattern("03/05/2026", "MM/DD/YYYY");
    REQUIRE(d.has_value());
    CHECK(d->to_string() == "2026-03-05");
    CHECK_FALSE(Date::parse_pattern("2026-03-05", "MM/DD/YYYY").has_value());
    auto compact = Date::parse_pattern("20260305", "YYYYMMDD");
    REQUIRE(compact.has_value());
    CHECK(compact->to_string() == "2026-03-05");
}

TEST_CASE("date arithmetic matches the day-stepping oracle") {
    // the aging-clock derivation used across the reconcile suite
    auto base = Date::parse_iso_or_throw("2026-01-02");
    auto expiry = base + 30;
    auto o = oracle_add_days({2026, 1, 2}, 30);
    CHECK(expiry.year() == o.y);
    CHECK(expiry.month() == o.m);
    CHECK(expiry.day() == o.d);
    CHECK(expiry.to_string() == "2026-02-01");

    CHECK(Date::parse_iso_or_throw("2026-02-14") - expiry == 13);
    CHECK(Date::parse_iso_or_throw("2026-02-15") - expiry == 14);

    // random spot checks across month and leap boundaries
    struct Case {
        const char* start;
        int add;
    } cases[] = {
        {"2024-02-27", 3}, {"2025-12-30", 5}, {"2026-01-31", 1}, {"2023-03-01", 400},
    };
    for (const auto& c : cases) {
        auto start = Date::parse_iso_or_throw(c.start);
        auto got = start + c.add;
        auto want = oracle_add_days({start.year(), start.month(), start.day()}, c.add);
        CHECK(got.year() == want.y);
        CHECK(got.month() == want.m);
        CHECK(got.day() == want.d);
        CHECK(got - start == c.add);
    }
}

TEST_CASE("decimal parse, arithmetic, canonical print") {
    CHECK(Decimal::parse_or_throw("12.5").to_string() == "12.5");
    CHECK(Decimal::parse_or_throw("12.50").to_string() == "12.5");
    CHECK(Decimal::parse_or_throw("0030").to_string() == "30");
    CHECK(Decimal::parse_or_throw("-5").to_string() == "-5");
    CHECK(Decimal::parse_or_throw("0.0001").to_string() == "0.0001");
    CHECK((Decimal::parse_or_throw("0.1") + Decimal::parse_or_throw("0.2")).to_string() == "0.3");
    CHECK_FALSE(Decimal::parse("1.23456").has_value());  // beyond scale
    CHECK_FALSE(Decimal::parse("abc").has_value());
    CHECK_FALSE(Decimal::parse("").has_value());
    CHECK(Decimal::parse_or_throw("69.99") < Decimal::parse_or_throw("70"));
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("canonical json sorts keys at every depth") {
    Json a;
    a["zeta"] = 1;
    a["alpha"] = Json::object();
    a["alpha"]["b"] = 2;
    a["alpha"]["a"] = 1;

    Json b;
    b["alpha"] = Json::object();
    b["alpha"]["a"] = 1;
    b["alpha"]["b"] = 2;
    b["zeta"] = 1;

    CHECK(canonical_json(a) == canonical_json(b));
    CHECK(canonical_digest(a) == canonical_digest(b));
    CHECK(canonical_json(a) == R"({"alpha":{"a":1,"b":2},"zeta":1})");
}

TEST_CASE("string helpers") {
    CHECK(trim("  x \t") == "x");
    CHECK(trim("") == "");
    CHECK(trim("   ") == "");
    CHECK(to_lower("AcTiVe") == "active");
    CHECK(short_id("a").size() == 16);
    CHECK(short_id("a") != short_id("b"));
}
