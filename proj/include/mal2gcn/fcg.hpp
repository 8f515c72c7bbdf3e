#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mal2gcn {

enum class Label { kBenign = 0, kMalware = 1 };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view text);

// One program function: the API names it calls and the strings it references.
// Token lists keep duplicates; each occurrence is counted by the featurizer.
struct FunctionNode {
  std::string id;
  std::vector<std::string> apis;
  std::vector<std::string> strings;

  bool operator==(const FunctionNode&) const = default;
};

using Edge = std::pair<std::string, std::string>;  // (caller, callee)

struct Fcg {
  std::string graph_id;
  std::optional<Label> label;
  std::string main_id;
  std::vector<FunctionNode> nodes;
  std::vector<Edge> edges;

  bool operator==(const Fcg&) const = default;

  // Position of the node with the given id, if present.
  std::optional<std::size_t> index_of(std::string_view id) const;
  // Sum of API and string token occurrences over all nodes.
  std::size_t total_tokens() const;
};

struct Corpus {
  std::vector<Fcg> records;
  std::map<std::string, std::string> provenance;
};

struct ValidationResult {
  std::vector<std::string> errors;
  // Isolated non-main nodes; repaired by normalize_fcg.
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

ValidationResult validate_fcg(const Fcg& g);

// Drops self-edges and duplicate edges (first occurrence order kept) and
// attaches every isolated non-main node with an edge main -> node.
// Throws DataError when validate_fcg reports errors.
Fcg normalize_fcg(const Fcg& g);

// ---- Interchange format: one JSON object per line ----

enum class ParseMode { kStrict, kLenient };

// Parses one record. In lenient mode unknown fields are dropped and a message
// is appended to `warnings` (when non-null); strict mode rejects them.
Fcg parse_fcg_record(std::string_view line, ParseMode mode = ParseMode::kStrict,
                     std::vector<std::string>* warnings = nullptr);
std::string format_fcg_record(const Fcg& g);

// Blank lines are skipped. Errors carry the 1-based line number.
Corpus read_corpus(const std::filesystem::path& path, ParseMode mode = ParseMode::kStrict,
                   std::vector<std::string>* warnings = nullptr);
Corpus parse_corpus(std::string_view text, ParseMode mode = ParseMode::kStrict,
                    std::vector<std::string>* warnings = nullptr);
std::string format_corpus(const Corpus& corpus);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace mal2gcn
