#pragma once

#include <Eigen/SparseCore>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mal2gcn/fcg.hpp"

namespace mal2gcn {

enum class TokenKind { kApi, kString };

std::string_view to_string(TokenKind kind);

inline constexpr std::size_t kMinStringLength = 4;
inline constexpr std::size_t kMaxStringLength = 30;

// Lowercases (ASCII) and, for strings, drops anything shorter than 4 scalar
// values and truncates to the first 30. API names only get lowercased.
std::optional<std::string> normalize_token(std::string_view raw, TokenKind kind);

// Number of Unicode scalar values in a UTF-8 string.
std::size_t utf8_length(std::string_view text);

// Per-token statistics gathered over a labeled corpus.
struct TokenStats {
  std::size_t malware_graphs = 0;  // graphs containing the token
  std::size_t benign_graphs = 0;
  std::size_t occurrences = 0;  // total count over all graphs
};

// 2x2 chi-squared statistic between token presence and label.
double chi_squared_score(const TokenStats& stats, std::size_t n_malware, std::size_t n_benign);

struct SelectionConfig {
  std::size_t prefilter = 5000;  // most frequent candidates kept per kind before scoring
  std::function<double(const TokenStats&, std::size_t, std::size_t)> scorer = chi_squared_score;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> api_tokens, std::vector<double> api_scores,
             std::vector<std::string> string_tokens, std::vector<double> string_scores,
             std::size_t k_api, std::size_t k_str);

  const std::vector<std::string>& api_tokens() const { return api_tokens_; }
  const std::vector<std::string>& string_tokens() const { return string_tokens_; }
  const std::vector<double>& api_scores() const { return api_scores_; }
  const std::vector<double>& string_scores() const { return string_scores_; }
  std::size_t k_api() const { return k_api_; }
  std::size_t k_str() const { return k_str_; }

  // Configured size minus selected size; non-zero when the corpus ran short.
  std::size_t api_shortfall() const { return k_api_ - api_tokens_.size(); }
  std::size_t string_shortfall() const { return k_str_ - string_tokens_.size(); }

  // Feature dimension. API indices come first, string indices start at
  // api_tokens().size().
  std::size_t dim() const { return api_tokens_.size() + string_tokens_.size(); }
  std::optional<std::size_t> index_of(TokenKind kind, std::string_view token) const;
  // Token text and kind at a feature index.
  std::pair<TokenKind, const std::string&> token_at(std::size_t index) const;

  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  // SHA-256 of serialize(); ties models to the vocabulary they were trained on.
  std::string digest() const;

  bool operator==(const Vocabulary& other) const;

 private:
  void build_index();

  std::vector<std::string> api_tokens_;
  std::vector<double> api_scores_;
  std::vector<std::string> string_tokens_;
  std::vector<double> string_scores_;
  std::size_t k_api_ = 0;
  std::size_t k_str_ = 0;
  std::unordered_map<std::string, std::size_t> api_index_;
  std::unordered_map<std::string, std::size_t> string_index_;
};

Vocabulary build_vocabulary(const Corpus& corpus, std::size_t k_api, std::size_t k_str,
                            const SelectionConfig& config = {});

Vocabulary read_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

using SparseFeatures = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Bag-of-words counts, one row per function in graph node order.
struct FeatureMatrix {
  std::vector<std::string> node_order;
  SparseFeatures counts;

  std::size_t n() const { return static_cast<std::size_t>(counts.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(counts.cols()); }
  double at(std::size_t row, std::size_t col) const {
    return counts.coeff(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col));
  }
};

FeatureMatrix embed_graph(const Fcg& g, const Vocabulary& vocab);

}  // namespace mal2gcn
