#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace repalign::csv {

using Row = std::vector<std::string>;

// RFC 4180 subset: comma separated, double-quote quoting, "" escapes, LF or
// CRLF line ends. Fields containing separators, quotes or newlines are quoted
// on output.
std::string quote(std::string_view field);
std::string format_row(const Row& row);

std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Row& header, const std::vector<Row>& rows);

/// Shortest form that round-trips an IEEE double (17 significant digits).
std::string format_double(double v);
double parse_double(const std::string& s, std::string_view what);
long long parse_int(const std::string& s, std::string_view what);

}  // namespace repalign::csv
