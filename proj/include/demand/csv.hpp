#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace demand::csv {

/// A parsed CSV document: one header row followed by data rows. Quoted
/// fields (RFC 4180 double quotes) are supported; no type conversion is done.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based line number in the source for each data row.
    std::vector<std::size_t> line_numbers;

    std::optional<std::size_t> column(std::string_view name) const;
};

Table parse(std::string_view text);
Table read_file(const std::string &path);

/// Strict numeric conversion: the whole field must parse.
std::optional<double> to_double(std::string_view field);
std::optional<long long> to_integer(std::string_view field);

} // namespace demand::csv
