#include "demand/csv.hpp"

#include "demand/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace demand::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace

Table parse(std::string_view text) {
    Table table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    bool have_header = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_field = [&] {
        record.push_back(field_quoted ? field : std::string(trim(field)));
        field.clear();
        field_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        bool blank = record.size() == 1 && record[0].empty();
        if (!blank) {
            if (!have_header) {
                // Strip a UTF-8 byte order mark from the first header cell.
                if (record[0].size() >= 3 && record[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
                    record[0].erase(0, 3);
                table.header = std::move(record);
                have_header = true;
            } else {
                table.rows.push_back(std::move(record));
                table.line_numbers.push_back(record_line);
            }
        }
        record.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            field_quoted = true;
            break;
        case ',':
            end_field();
            break;
        case '\n':
            end_record();
            ++line;
            record_line = line;
            break;
        default:
            field.push_back(c);
        }
    }
    if (in_quotes) throw DemandError(ErrorCode::SchemaError, "unterminated quoted field at line " + std::to_string(record_line));
    if (!field.empty() || !record.empty()) end_record();
    if (!have_header) throw DemandError(ErrorCode::SchemaError, "CSV input has no header row");
    return table;
}

Table read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

std::optional<double> to_double(std::string_view field) {
    field = trim(field);
    if (field.empty()) return std::nullopt;
    if (field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
    return value;
}

std::optional<long long> to_integer(std::string_view field) {
    field = trim(field);
    if (field.empty()) return std::nullopt;
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) return std::nullopt;
    return value;
}

} // namespace demand::csv
