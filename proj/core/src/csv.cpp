#include "gera/csv.hpp"

#include "gera/common.hpp"

namespace gera::csv {

namespace {

struct Cursor {
    std::string_view text;
    std::size_t pos = 0;
    std::size_t line = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char next() {
        char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }
};

// Reads one record; returns false at end of input.
bool read_record(Cursor& cur, std::vector<std::string>& fields, std::size_t& record_line) {
    fields.clear();
    if (cur.eof()) return false;
    record_line = cur.line;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    while (true) {
        if (cur.eof()) {
            if (in_quotes) {
                throw ValidationError("csv: line " + std::to_string(record_line) +
                                      ": unterminated quoted field");
            }
            fields.push_back(std::move(field));
            return true;
        }
        char c = cur.next();
        if (in_quotes) {
            if (c == '"') {
                if (!cur.eof() && cur.peek() == '"') {
                    field.push_back('"');
                    cur.next();
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty() || field_was_quoted) {
                    throw ValidationError("csv: line " + std::to_string(cur.line) +
                                          ": quote inside unquoted field");
                }
                in_quotes = true;
                field_was_quoted = true;
                break;
            case ',':
                fields.push_back(std::move(field));
                field.clear();
                field_was_quoted = false;
                break;
            case '\r':
                if (!cur.eof() && cur.peek() == '\n') cur.next();
                fields.push_back(std::move(field));
                return true;
            case '\n':
                fields.push_back(std::move(field));
                return true;
            default:
                field.push_back(c);
                break;
        }
    }
}

}  // namespace

Table parse(std::string_view text) {
    Cursor cur{text};
    Table table;
    std::vector<std::string> fields;
    std::size_t line = 0;
    if (!read_record(cur, fields, line)) {
        throw ValidationError("csv: empty input, header row required");
    }
    table.header = fields;
    while (read_record(cur, fields, line)) {
        if (fields.size() == 1 && fields[0].empty() && cur.eof()) break;  // trailing newline
        if (fields.size() != table.header.size()) {
            throw ValidationError("csv: line " + std::to_string(line) + ": expected " +
                                  std::to_string(table.header.size()) + " fields, got " +
                                  std::to_string(fields.size()));
        }
        table.rows.push_back(fields);
    }
    return table;
}

}  // namespace gera::csv
