#include "mal2gcn/featurize.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "mal2gcn/digest.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/text.hpp"

namespace mal2gcn {

std::string_view to_string(TokenKind kind) { return kind == TokenKind::kApi ? "api" : "string"; }

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

namespace {

// Byte offset just past the first `count` scalar values.
std::size_t utf8_prefix_bytes(std::string_view text, std::size_t count) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (seen == count) return i;
      ++seen;
    }
  }
  return text.size();
}

}  // namespace

std::optional<std::string> normalize_token(std::string_view raw, TokenKind kind) {
  std::string token(raw);
  for (char& c : token) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  if (kind == TokenKind::kApi) return token;
  if (utf8_length(token) < kMinStringLength) return std::nullopt;
  token.resize(utf8_prefix_bytes(token, kMaxStringLength));
  return token;
}

double chi_squared_score(const TokenStats& stats, std::size_t n_malware, std::size_t n_benign) {
  const double a = static_cast<double>(stats.malware_graphs);
  const double b = static_cast<double>(stats.benign_graphs);
  const double c = static_cast<double>(n_malware) - a;
  const double d = static_cast<double>(n_benign) - b;
  const double n = a + b + c + d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  if (denom <= 0.0) return 0.0;
  const double cross = a * d - b * c;
  return n * cross * cross / denom;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> api_tokens, std::vector<double> api_scores,
                       std::vector<std::string> string_tokens,
                       std::vector<double> string_scores, std::size_t k_api, std::size_t k_str)
    : api_tokens_(std::move(api_tokens)),
      api_scores_(std::move(api_scores)),
      string_tokens_(std::move(string_tokens)),
      string_scores_(std::move(string_scores)),
      k_api_(k_api),
      k_str_(k_str) {
  if (api_tokens_.size() != api_scores_.size() ||
      string_tokens_.size() != string_scores_.size()) {
    throw DataError("vocabulary tokens and scores differ in length");
  }
  if (api_tokens_.size() > k_api_ || string_tokens_.size() > k_str_) {
    throw DataError("vocabulary holds more tokens than its configured size");
  }
  build_index();
}

void Vocabulary::build_index() {
  api_index_.clear();
  string_index_.clear();
  for (std::size_t i = 0; i < api_tokens_.size(); ++i) {
    auto normalized = normalize_token(api_tokens_[i], TokenKind::kApi);
    if (!normalized || *normalized != api_tokens_[i]) {
      throw DataError("vocabulary api token '" + api_tokens_[i] + "' is not normalized");
    }
    if (!api_index_.emplace(api_tokens_[i], i).second) {
      throw DataError("duplicate vocabulary api token '" + api_tokens_[i] + "'");
    }
  }
  for (std::size_t j = 0; j < string_tokens_.size(); ++j) {
    auto normalized = normalize_token(string_tokens_[j], TokenKind::kString);
    if (!normalized || *normalized != string_tokens_[j]) {
      throw DataError("vocabulary string token '" + string_tokens_[j] + "' is not normalized");
    }
    if (!string_index_.emplace(string_tokens_[j], api_tokens_.size() + j).second) {
      throw DataError("duplicate vocabulary string token '" + string_tokens_[j] + "'");
    }
  }
}

std::optional<std::size_t> Vocabulary::index_of(TokenKind kind, std::string_view token) const {
  const auto& index = kind == TokenKind::kApi ? api_index_ : string_index_;
  auto it = index.find(std::string(token));
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::pair<TokenKind, const std::string&> Vocabulary::token_at(std::size_t index) const {
  if (index < api_tokens_.size()) return {TokenKind::kApi, api_tokens_[index]};
  return {TokenKind::kString, string_tokens_.at(index - api_tokens_.size())};
}

bool Vocabulary::operator==(const Vocabulary& other) const {
  return api_tokens_ == other.api_tokens_ && api_scores_ == other.api_scores_ &&
         string_tokens_ == other.string_tokens_ && string_scores_ == other.string_scores_ &&
         k_api_ == other.k_api_ && k_str_ == other.k_str_;
}

std::string Vocabulary::serialize() const {
  std::string out = "#mal2gcn-vocab v1 k_api=" + std::to_string(k_api_) +
                    " k_str=" + std::to_string(k_str_) + "\n";
  auto emit = [&out](std::string_view kind, const std::string& token, double score) {
    out += kind;
    out += '\t';
    out += escape_field(token);
    out += '\t';
    out += format_double(score);
    out += '\n';
  };
  for (std::size_t i = 0; i < api_tokens_.size(); ++i) emit("api", api_tokens_[i], api_scores_[i]);
  for (std::size_t j = 0; j < string_tokens_.size(); ++j) {
    emit("string", string_tokens_[j], string_scores_[j]);
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw DataError("vocabulary file is empty");
  const auto header = parse_header(lines.front(), "#mal2gcn-vocab", "v1");
  const std::size_t k_api = parse_size(header_value(header, "k_api"), "k_api");
  const std::size_t k_str = parse_size(header_value(header, "k_str"), "k_str");

  std::vector<std::string> apis, strings;
  std::vector<double> api_scores, string_scores;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i], '\t');
    const std::string where = "vocabulary line " + std::to_string(i + 1);
    if (fields.size() != 3) throw DataError(where + ": expected kind<TAB>token<TAB>score");
    const double score = parse_double(fields[2], where);
    if (fields[0] == "api") {
      if (!strings.empty()) throw DataError(where + ": api rows must precede string rows");
      apis.push_back(unescape_field(fields[1]));
      api_scores.push_back(score);
    } else if (fields[0] == "string") {
      strings.push_back(unescape_field(fields[1]));
      string_scores.push_back(score);
    } else {
      throw DataError(where + ": unknown kind '" + std::string(fields[0]) + "'");
    }
  }
  return Vocabulary(std::move(apis), std::move(api_scores), std::move(strings),
                    std::move(string_scores), k_api, k_str);
}

std::string Vocabulary::digest() const { return sha256_hex(serialize()); }

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  try {
    return Vocabulary::parse(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_text_file(path, vocab.serialize());
}

// ---------------------------------------------------------- build_vocabulary

namespace {

struct Candidate {
  std::string token;
  TokenStats stats;
  double score = 0.0;
};

std::vector<Candidate> select_kind(std::map<std::string, TokenStats> stats, std::size_t k,
                                   std::size_t n_malware, std::size_t n_benign,
                                   const SelectionConfig& config) {
  std::vector<Candidate> candidates;
  candidates.reserve(stats.size());
  for (auto& [token, s] : stats) candidates.push_back({token, s, 0.0});

  // Pre-filter by raw frequency.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.stats.occurrences != b.stats.occurrences) {
      return a.stats.occurrences > b.stats.occurrences;
    }
    return a.token < b.token;
  });
  if (candidates.size() > config.prefilter) candidates.resize(config.prefilter);

  for (auto& c : candidates) c.score = config.scorer(c.stats, n_malware, n_benign);
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.stats.occurrences != b.stats.occurrences) {
      return a.stats.occurrences > b.stats.occurrences;
    }
    return a.token < b.token;
  });
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

}  // namespace

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t k_api, std::size_t k_str,
                            const SelectionConfig& config) {
  if (k_api == 0 || k_str == 0) throw DataError("vocabulary sizes must be >= 1");
  if (corpus.records.empty()) throw DataError("cannot build a vocabulary from an empty corpus");

  std::map<std::string, TokenStats> api_stats, string_stats;
  std::size_t n_malware = 0, n_benign = 0;
  for (const auto& g : corpus.records) {
    if (!g.label) throw DataError("graph " + g.graph_id + " has no label");
    const bool malware = *g.label == Label::kMalware;
    (malware ? n_malware : n_benign) += 1;

    std::set<std::string> seen_api, seen_string;
    for (const auto& node : g.nodes) {
      for (const auto& raw : node.apis) {
        auto token = normalize_token(raw, TokenKind::kApi);
        ++api_stats[*token].occurrences;
        seen_api.insert(std::move(*token));
      }
      for (const auto& raw : node.strings) {
        auto token = normalize_token(raw, TokenKind::kString);
        if (!token) continue;
        ++string_stats[*token].occurrences;
        seen_string.insert(std::move(*token));
      }
    }
    for (const auto& t : seen_api) (malware ? api_stats[t].malware_graphs : api_stats[t].benign_graphs)++;
    for (const auto& t : seen_string) {
      (malware ? string_stats[t].malware_graphs : string_stats[t].benign_graphs)++;
    }
  }
  if (n_malware == 0 || n_benign == 0) {
    throw DataError("vocabulary selection needs both malware and benign graphs");
  }

  auto apis = select_kind(std::move(api_stats), k_api, n_malware, n_benign, config);
  auto strings = select_kind(std::move(string_stats), k_str, n_malware, n_benign, config);

  std::vector<std::string> api_tokens, string_tokens;
  std::vector<double> api_scores, string_scores;
  for (auto& c : apis) {
    api_tokens.push_back(std::move(c.token));
    api_scores.push_back(c.score);
  }
  for (auto& c : strings) {
    string_tokens.push_back(std::move(c.token));
    string_scores.push_back(c.score);
  }
  return Vocabulary(std::move(api_tokens), std::move(api_scores), std::move(string_tokens),
                    std::move(string_scores), k_api, k_str);
}

// --------------------------------------------------------------- embed_graph

FeatureMatrix embed_graph(const Fcg& g, const Vocabulary& vocab) {
  FeatureMatrix fm;
  fm.node_order.reserve(g.nodes.size());
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& node = g.nodes[i];
    fm.node_order.push_back(node.id);
    auto add = [&](const std::string& raw, TokenKind kind) {
      auto token = normalize_token(raw, kind);
      if (!token) return;
      if (auto idx = vocab.index_of(kind, *token)) {
        entries.emplace_back(static_cast<int>(i), static_cast<int>(*idx), 1.0);
      }
    };
    for (const auto& raw : node.apis) add(raw, TokenKind::kApi);
    for (const auto& raw : node.strings) add(raw, TokenKind::kString);
  }
  fm.counts.resize(static_cast<Eigen::Index>(g.nodes.size()),
                   static_cast<Eigen::Index>(vocab.dim()));
  fm.counts.setFromTriplets(entries.begin(), entries.end());
  fm.counts.makeCompressed();
  return fm;
}

}  // namespace mal2gcn
