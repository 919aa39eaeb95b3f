#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gera::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct ParseError {
    std::size_t line = 0;  // 1-based physical line of the offending record
    std::string message;
};

// RFC-4180: quoted fields, doubled quotes, embedded newlines inside quotes,
// CRLF or LF record ends. Header row required. Every data row must have the
// header's field count.
Table parse(std::string_view text);  // throws ValidationError with diagnostics

}  // namespace gera::csv
