#include "gera/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>

namespace gera {

namespace {

namespace chr = std::chrono;

chr::year_month_day ymd_of(std::int64_t days) {
    return chr::year_month_day{chr::sys_days{chr::days{days}}};
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
        return std::isdigit(c) != 0;
    });
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
    if (!ymd.ok()) {
        throw ValidationError("invalid calendar date: " + std::to_string(year) + "-" +
                              std::to_string(month) + "-" + std::to_string(day));
    }
    return Date::from_days(chr::sys_days{ymd}.time_since_epoch().count());
}

std::optional<Date> Date::parse_iso(std::string_view s) {
    return parse_pattern(s, "YYYY-MM-DD");
}

Date Date::parse_iso_or_throw(std::string_view s) {
    auto d = parse_iso(s);
    if (!d) throw ValidationError("not a valid ISO date: \"" + std::string(s) + "\"");
    return *d;
}

std::optional<Date> Date::parse_pattern(std::string_view s, std::string_view pattern) {
    int year = 0;
    unsigned month = 0, day = 0;
    bool have_y = false, have_m = false, have_d = false;
    std::size_t si = 0;
    std::size_t pi = 0;
    while (pi < pattern.size()) {
        auto take = [&](std::size_t n) -> std::optional<std::string_view> {
            if (si + n > s.size()) return std::nullopt;
            auto part = s.substr(si, n);
            if (!all_digits(part)) return std::nullopt;
            si += n;
            return part;
        };
        if (pattern.compare(pi, 4, "YYYY") == 0) {
            auto part = take(4);
            if (!part) return std::nullopt;
            std::from_chars(part->data(), part->data() + part->size(), year);
            have_y = true;
            pi += 4;
        } else if (pattern.compare(pi, 2, "MM") == 0) {
            auto part = take(2);
            if (!part) return std::nullopt;
            std::from_chars(part->data(), part->data() + part->size(), month);
            have_m = true;
            pi += 2;
        } else if (pattern.compare(pi, 2, "DD") == 0) {
            auto part = take(2);
            if (!part) return std::nullopt;
            std::from_chars(part->data(), part->data() + part->size(), day);
            have_d = true;
            pi += 2;
        } else {
            if (si >= s.size() || s[si] != pattern[pi]) return std::nullopt;
            ++si;
            ++pi;
        }
    }
    if (si != s.size() || !have_y || !have_m || !have_d) return std::nullopt;
    chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
    if (!ymd.ok()) return std::nullopt;
    return Date::from_days(chr::sys_days{ymd}.time_since_epoch().count());
}

int Date::year() const { return int(ymd_of(days_).year()); }
unsigned Date::month() const { return unsigned(ymd_of(days_).month()); }
unsigned Date::day() const { return unsigned(ymd_of(days_).day()); }

std::string Date::to_string() const {
    auto ymd = ymd_of(days_);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()));
    return buf;
}

std::optional<Decimal> Decimal::parse(std::string_view s) {
    std::string t = trim(s);
    std::string_view v = t;
    if (v.empty()) return std::nullopt;
    bool neg = false;
    if (v.front() == '+' || v.front() == '-') {
        neg = v.front() == '-';
        v.remove_prefix(1);
    }
    if (v.empty()) return std::nullopt;
    auto dot = v.find('.');
    std::string_view int_part = dot == std::string_view::npos ? v : v.substr(0, dot);
    std::string_view frac_part = dot == std::string_view::npos ? "" : v.substr(dot + 1);
    if (int_part.empty() && frac_part.empty()) return std::nullopt;
    if (!int_part.empty() && !all_digits(int_part)) return std::nullopt;
    if (!frac_part.empty() && !all_digits(frac_part)) return std::nullopt;
    if (frac_part.size() > 4) return std::nullopt;  // beyond supported scale

    std::int64_t whole = 0;
    if (!int_part.empty()) {
        auto [p, ec] = std::from_chars(int_part.data(), int_part.data() + int_part.size(), whole);
        if (ec != std::errc()) return std::nullopt;
    }
    std::int64_t frac = 0;
    std::int64_t mult = kScale;
    for (char c : frac_part) {
        mult /= 10;
        frac += (c - '0') * mult;
    }
    std::int64_t units = whole * kScale + frac;
    return Decimal::from_raw(neg ? -units : units);
}

Decimal Decimal::parse_or_throw(std::string_view s) {
    auto d = parse(s);
    if (!d) throw ValidationError("not a valid decimal: \"" + std::string(s) + "\"");
    return *d;
}

std::string Decimal::to_string() const {
    std::int64_t u = units_;
    std::string sign;
    if (u < 0) {
        sign = "-";
        u = -u;
    }
    std::int64_t whole = u / kScale;
    std::int64_t frac = u % kScale;
    if (frac == 0) return sign + std::to_string(whole);
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%04lld", static_cast<long long>(frac));
    std::string f = buf;
    while (!f.empty() && f.back() == '0') f.pop_back();
    return sign + std::to_string(whole) + "." + f;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

void canonicalize(const Json& v, nlohmann::json& out) {
    // nlohmann::json objects are std::map-backed: keys come out sorted
    switch (v.type()) {
        case Json::value_t::object: {
            out = nlohmann::json::object();
            for (const auto& [k, val] : v.items()) {
                nlohmann::json child;
                canonicalize(val, child);
                out[k] = std::move(child);
            }
            break;
        }
        case Json::value_t::array: {
            out = nlohmann::json::array();
            for (const auto& el : v) {
                nlohmann::json child;
                canonicalize(el, child);
                out.push_back(std::move(child));
            }
            break;
        }
        default:
            out = nlohmann::json::parse(v.dump());
            break;
    }
}

}  // namespace

std::string canonical_json(const Json& value) {
    nlohmann::json sorted;
    canonicalize(value, sorted);
    return sorted.dump();
}

std::string canonical_digest(const Json& value) { return sha256_hex(canonical_json(value)); }

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string short_id(std::string_view tag) { return sha256_hex(tag).substr(0, 16); }

}  // namespace gera
