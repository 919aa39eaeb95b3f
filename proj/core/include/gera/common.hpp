#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace gera {

using Json = nlohmann::ordered_json;

// Validation failures in user-supplied input or configuration. CLI exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Store corruption, digest mismatches, broken audit chains. CLI exit code 2.
class IntegrityError : public std::runtime_error {
public:
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad rule sets, match specs, schemas, policies.
class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// Calendar date backed by a day count since 1970-01-01. All pipeline clocks
// are logical dates supplied by the caller; there is no wall-clock anywhere.
class Date {
public:
    Date() = default;
    static Date from_days(std::int64_t days) { return Date{days}; }
    static Date from_ymd(int year, unsigned month, unsigned day);

    // Strict ISO-8601 calendar date ("YYYY-MM-DD").
    static std::optional<Date> parse_iso(std::string_view s);
    static Date parse_iso_or_throw(std::string_view s);

    // Parse against one declared pattern built from YYYY, MM, DD tokens and
    // literal separators (e.g. "MM/DD/YYYY", "YYYYMMDD"). No sniffing.
    static std::optional<Date> parse_pattern(std::string_view s, std::string_view pattern);

    std::int64_t days() const { return days_; }
    int year() const;
    unsigned month() const;
    unsigned day() const;
    std::string to_string() const;  // YYYY-MM-DD

    Date operator+(std::int64_t d) const { return Date{days_ + d}; }
    Date operator-(std::int64_t d) const { return Date{days_ - d}; }
    std::int64_t operator-(Date other) const { return days_ - other.days_; }
    auto operator<=>(const Date&) const = default;

private:
    explicit Date(std::int64_t days) : days_(days) {}
    std::int64_t days_ = 0;
};

// Exact fixed-point decimal, scale 1e-4. Amounts and quantities flow through
// this type so that sums and serialized outputs are bit-stable across runs.
class Decimal {
public:
    static constexpr std::int64_t kScale = 10000;

    Decimal() = default;
    static Decimal from_raw(std::int64_t units) { return Decimal{units}; }
    static Decimal from_int(std::int64_t v) { return Decimal{v * kScale}; }
    static std::optional<Decimal> parse(std::string_view s);
    static Decimal parse_or_throw(std::string_view s);

    std::int64_t raw() const { return units_; }
    double to_double() const { return static_cast<double>(units_) / kScale; }
    bool negative() const { return units_ < 0; }
    bool is_zero() const { return units_ == 0; }

    // Canonical form: minimal digits, no trailing fraction zeros ("12.5", "30").
    std::string to_string() const;

    Decimal operator+(Decimal o) const { return Decimal{units_ + o.units_}; }
    Decimal operator-(Decimal o) const { return Decimal{units_ - o.units_}; }
    Decimal& operator+=(Decimal o) { units_ += o.units_; return *this; }
    Decimal& operator-=(Decimal o) { units_ -= o.units_; return *this; }
    auto operator<=>(const Decimal&) const = default;

private:
    explicit Decimal(std::int64_t units) : units_(units) {}
    std::int64_t units_ = 0;
};

// SHA-256 as lowercase hex.
std::string sha256_hex(std::string_view data);

// Digest of a JSON value serialized canonically: object keys sorted,
// UTF-8, no whitespace. Bit-exact across implementations.
std::string canonical_json(const Json& value);
std::string canonical_digest(const Json& value);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// deterministic short id: first 16 hex chars of sha256(tag)
std::string short_id(std::string_view tag);

}  // namespace gera
