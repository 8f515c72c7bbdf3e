#include "mal2gcn/fcg.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mal2gcn/error.hpp"

namespace mal2gcn {

using json = nlohmann::ordered_json;

std::string_view to_string(Label label) {
  return label == Label::kMalware ? "malware" : "benign";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "malware") return Label::kMalware;
  if (text == "benign") return Label::kBenign;
  return std::nullopt;
}

std::optional<std::size_t> Fcg::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t Fcg::total_tokens() const {
  std::size_t total = 0;
  for (const auto& node : nodes) total += node.apis.size() + node.strings.size();
  return total;
}

ValidationResult validate_fcg(const Fcg& g) {
  ValidationResult result;
  std::unordered_set<std::string_view> ids;
  for (const auto& node : g.nodes) {
    if (node.id.empty()) {
      result.errors.push_back("empty node id");
      continue;
    }
    if (!ids.insert(node.id).second) result.errors.push_back("duplicate id " + node.id);
  }
  if (g.nodes.empty()) result.errors.push_back("graph has no nodes");
  if (!ids.contains(g.main_id)) result.errors.push_back("unknown main " + g.main_id);

  std::unordered_map<std::string_view, std::size_t> degree;
  for (const auto& [caller, callee] : g.edges) {
    bool known = true;
    for (const auto* end : {&caller, &callee}) {
      if (!ids.contains(*end)) {
        result.errors.push_back("unknown edge endpoint " + *end);
        known = false;
      }
    }
    if (known && caller != callee) {
      ++degree[caller];
      ++degree[callee];
    }
  }
  for (const auto& node : g.nodes) {
    if (node.id != g.main_id && !node.id.empty() && !degree.contains(node.id)) {
      result.warnings.push_back("isolated node " + node.id);
    }
  }
  return result;
}

Fcg normalize_fcg(const Fcg& g) {
  const auto check = validate_fcg(g);
  if (!check.ok()) {
    throw DataError("graph " + g.graph_id + " is invalid: " + check.errors.front());
  }
  Fcg out = g;
  out.edges.clear();
  std::set<Edge> seen;
  std::unordered_set<std::string_view> touched;
  for (const auto& edge : g.edges) {
    if (edge.first == edge.second) continue;
    if (!seen.insert(edge).second) continue;
    out.edges.push_back(edge);
    touched.insert(edge.first);
    touched.insert(edge.second);
  }
  for (const auto& node : g.nodes) {
    if (node.id != g.main_id && !touched.contains(node.id)) {
      out.edges.emplace_back(g.main_id, node.id);
    }
  }
  return out;
}

namespace {

std::vector<std::string> string_array(const json& value, const std::string& what) {
  if (!value.is_array()) throw DataError(what + " must be an array of strings");
  std::vector<std::string> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_string()) throw DataError(what + " must be an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

void check_fields(const json& object, std::initializer_list<std::string_view> allowed,
                  const std::string& where, ParseMode mode,
                  std::vector<std::string>* warnings) {
  for (const auto& [key, _] : object.items()) {
    bool known = false;
    for (auto name : allowed) known = known || key == name;
    if (known) continue;
    if (mode == ParseMode::kStrict) throw DataError("unknown field '" + key + "' in " + where);
    if (warnings) warnings->push_back("ignored unknown field '" + key + "' in " + where);
  }
  for (auto name : allowed) {
    if (!object.contains(name)) {
      throw DataError("missing field '" + std::string(name) + "' in " + where);
    }
  }
}

}  // namespace

Fcg parse_fcg_record(std::string_view line, ParseMode mode, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed record: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("record is not an object");
  check_fields(doc, {"graph_id", "label", "main", "nodes", "edges"}, "record", mode, warnings);

  Fcg g;
  if (!doc["graph_id"].is_string()) throw DataError("graph_id must be a string");
  g.graph_id = doc["graph_id"].get<std::string>();
  const std::string where = "graph " + g.graph_id;
  const auto& label = doc["label"];
  if (!label.is_null()) {
    if (!label.is_string()) throw DataError("label must be a string or null in " + where);
    g.label = parse_label(label.get<std::string>());
    if (!g.label) throw DataError("bad label '" + label.get<std::string>() + "' in " + where);
  }
  if (!doc["main"].is_string()) throw DataError("main must be a string in " + where);
  g.main_id = doc["main"].get<std::string>();

  if (!doc["nodes"].is_array()) throw DataError("nodes must be an array in " + where);
  for (const auto& n : doc["nodes"]) {
    if (!n.is_object()) throw DataError("node is not an object in " + where);
    check_fields(n, {"id", "apis", "strings"}, "node of " + where, mode, warnings);
    if (!n["id"].is_string()) throw DataError("node id must be a string in " + where);
    g.nodes.push_back({n["id"].get<std::string>(), string_array(n["apis"], "apis"),
                       string_array(n["strings"], "strings")});
  }
  if (!doc["edges"].is_array()) throw DataError("edges must be an array in " + where);
  for (const auto& e : doc["edges"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
      throw DataError("edge must be a [caller, callee] pair in " + where);
    }
    g.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return g;
}

std::string format_fcg_record(const Fcg& g) {
  json doc;
  doc["graph_id"] = g.graph_id;
  doc["label"] = g.label ? json(std::string(to_string(*g.label))) : json(nullptr);
  doc["main"] = g.main_id;
  json nodes = json::array();
  for (const auto& node : g.nodes) {
    json n;
    n["id"] = node.id;
    n["apis"] = node.apis;
    n["strings"] = node.strings;
    nodes.push_back(std::move(n));
  }
  doc["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& [caller, callee] : g.edges) edges.push_back(json::array({caller, callee}));
  doc["edges"] = std::move(edges);
  return doc.dump(-1, ' ', false, json::error_handler_t::strict);
}

Corpus parse_corpus(std::string_view text, ParseMode mode, std::vector<std::string>* warnings) {
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      corpus.records.push_back(parse_fcg_record(line, mode, warnings));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path, ParseMode mode,
                   std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    auto corpus = parse_corpus(text, mode, warnings);
    corpus.provenance["source"] = path.string();
    return corpus;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& g : corpus.records) {
    out += format_fcg_record(g);
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write corpus " + path.string());
  out << format_corpus(corpus);
}

}  // namespace mal2gcn
