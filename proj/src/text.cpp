#include "mal2gcn/text.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <system_error>

#include "mal2gcn/error.hpp"

namespace mal2gcn {

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("cannot format double");
  return std::string(buf, end);
}

double parse_double(std::string_view text, const std::string& where) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw DataError(where + ": bad number '" + std::string(text) + "'");
  }
  return value;
}

std::size_t parse_size(std::string_view text, const std::string& where) {
  std::size_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw DataError(where + ": bad integer '" + std::string(text) + "'");
  }
  return value;
}

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view field) {
  std::string out;
  out.reserve(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (field[i] != '\\' || i + 1 == field.size()) {
      out += field[i];
      continue;
    }
    switch (field[++i]) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default: throw DataError("bad escape in field '" + std::string(field) + "'");
    }
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto end = line.find(sep, pos);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
}

std::map<std::string, std::string> parse_header(std::string_view line, std::string_view magic,
                                                std::string_view version) {
  auto words = split_fields(line, ' ');
  if (words.empty() || words[0] != magic) {
    throw DataError("missing header '" + std::string(magic) + "'");
  }
  if (words.size() < 2 || words[1] != version) {
    throw DataError("unsupported version in header '" + std::string(line) + "'");
  }
  std::map<std::string, std::string> values;
  for (std::size_t i = 2; i < words.size(); ++i) {
    if (words[i].empty()) continue;
    auto eq = words[i].find('=');
    if (eq == std::string_view::npos) {
      throw DataError("bad header entry '" + std::string(words[i]) + "'");
    }
    values.emplace(std::string(words[i].substr(0, eq)), std::string(words[i].substr(eq + 1)));
  }
  return values;
}

const std::string& header_value(const std::map<std::string, std::string>& header,
                                const std::string& key) {
  auto it = header.find(key);
  if (it == header.end()) throw DataError("header lacks '" + key + "'");
  return it->second;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace mal2gcn

namespace mal2gcn {

std::string csv_field(std::string_view raw) {
  if (raw.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(raw);
  std::string out = "\"";
  for (char c : raw) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace mal2gcn
