#pragma once

// Small helpers shared by the line-oriented file formats.

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mal2gcn {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text, const std::string& where);
std::size_t parse_size(std::string_view text, const std::string& where);

// Backslash-escapes tab, newline, carriage return and backslash.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view field);

std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string_view> split_fields(std::string_view line, char sep);

// Parses "<magic> <version> key=value ..." and returns the key/value pairs.
// Throws DataError on a wrong magic or version.
std::map<std::string, std::string> parse_header(std::string_view line, std::string_view magic,
                                                std::string_view version);
const std::string& header_value(const std::map<std::string, std::string>& header,
                                const std::string& key);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mal2gcn

namespace mal2gcn {

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view raw);

}  // namespace mal2gcn
