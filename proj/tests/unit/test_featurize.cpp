#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/featurize.hpp"

using namespace mal2gcn;
using testing_support::graph;
using testing_support::node;

namespace {

// Pearson statistic from observed and expected cell counts.
double pearson(double a, double b, double c, double d) {
  const double obs[2][2] = {{a, b}, {c, d}};
  const double n = a + b + c + d;
  const double row[2] = {a + b, c + d};
  const double col[2] = {a + c, b + d};
  double chi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / n;
      chi += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  }
  return chi;
}

// 100 malware + 100 benign graphs. Token "hot" is in 90 malware and 1 benign
// graph; "even" is in 50 of each.
Corpus presence_corpus() {
  Corpus c;
  for (int i = 0; i < 200; ++i) {
    const bool mal = i < 100;
    const int k = mal ? i : i - 100;
    std::vector<std::string> apis{"filler"};
    if (mal ? k < 90 : k < 1) apis.push_back("hot");
    if (k < 50) apis.push_back("even");
    std::vector<std::string> strings;
    if (mal && k < 30) strings.push_back("marker string");
    c.records.push_back(graph({node("main", apis, strings)}, {}, "main",
                              mal ? Label::kMalware : Label::kBenign, "g" + std::to_string(i)));
  }
  return c;
}

Vocabulary tiny_vocab() {
  return Vocabulary({"createfilew", "regsetvaluea"}, {1.0, 1.0}, {"hello world", "abcd"},
                    {1.0, 1.0}, 2, 2);
}

}  // namespace

TEST(NormalizeToken, ApiLowercasedOnly) {
  EXPECT_EQ(normalize_token("CreateFileW", TokenKind::kApi), "createfilew");
  EXPECT_EQ(normalize_token("Ab", TokenKind::kApi), "ab");
}

TEST(NormalizeToken, ShortStringDropped) {
  EXPECT_FALSE(normalize_token("abc", TokenKind::kString).has_value());
  EXPECT_EQ(normalize_token("ABCD", TokenKind::kString), "abcd");
}

TEST(NormalizeToken, LongStringTruncated) {
  const std::string s31(31, 'a');
  EXPECT_EQ(normalize_token(s31, TokenKind::kString), std::string(30, 'a'));
}

TEST(NormalizeToken, LengthCountsScalarValues) {
  // Four scalar values, eight bytes.
  EXPECT_EQ(utf8_length("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9"), 4u);
  EXPECT_TRUE(normalize_token("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9", TokenKind::kString).has_value());
  EXPECT_FALSE(normalize_token("\xC3\xA9\xC3\xA9\xC3\xA9", TokenKind::kString).has_value());
  std::string long_utf8;
  for (int i = 0; i < 31; ++i) long_utf8 += "\xC3\xA9";
  const auto t = normalize_token(long_utf8, TokenKind::kString);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(utf8_length(*t), 30u);
}

TEST(ChiSquared, MatchesPearsonTable) {
  EXPECT_NEAR(chi_squared_score({90, 1, 0}, 100, 100), pearson(90, 1, 10, 99), 1e-9);
  EXPECT_NEAR(chi_squared_score({50, 50, 0}, 100, 100), pearson(50, 50, 50, 50), 1e-12);
  EXPECT_NEAR(chi_squared_score({3, 17, 0}, 40, 60), pearson(3, 17, 37, 43), 1e-9);
}

TEST(BuildVocabulary, DiscriminativeTokenRanksFirst) {
  const auto v = build_vocabulary(presence_corpus(), 3, 1);
  ASSERT_EQ(v.api_tokens().size(), 3u);
  EXPECT_EQ(v.api_tokens()[0], "hot");
  const auto hot = std::find(v.api_tokens().begin(), v.api_tokens().end(), "hot");
  const auto even = std::find(v.api_tokens().begin(), v.api_tokens().end(), "even");
  EXPECT_LT(hot, even);
}

TEST(BuildVocabulary, Shortfall) {
  Corpus c;
  c.records.push_back(graph({node("main", {"A", "B"})}, {}, "main", Label::kMalware, "m"));
  c.records.push_back(graph({node("main", {"C"}, {"some string"})}, {}, "main", Label::kBenign, "b"));
  const auto v = build_vocabulary(c, 500, 500);
  EXPECT_EQ(v.api_tokens().size(), 3u);
  EXPECT_EQ(v.api_shortfall(), 497u);
  EXPECT_EQ(v.string_tokens().size(), 1u);
  EXPECT_EQ(v.dim(), 4u);
}

TEST(BuildVocabulary, DeterministicAndOrderInvariant) {
  auto c = presence_corpus();
  const auto a = build_vocabulary(c, 3, 1);
  const auto b = build_vocabulary(c, 3, 1);
  EXPECT_EQ(a.serialize(), b.serialize());
  std::mt19937_64 rng(7);
  std::shuffle(c.records.begin(), c.records.end(), rng);
  EXPECT_EQ(build_vocabulary(c, 3, 1).serialize(), a.serialize());
}

TEST(BuildVocabulary, Errors) {
  EXPECT_THROW(build_vocabulary(Corpus{}, 5, 5), DataError);
  Corpus one;
  one.records.push_back(graph({node("main", {"A"})}, {}, "main", Label::kMalware, "m"));
  EXPECT_THROW(build_vocabulary(one, 5, 5), DataError);
  Corpus unlabeled = one;
  unlabeled.records.push_back(graph({node("main", {"B"})}, {}, "main", std::nullopt, "u"));
  EXPECT_THROW(build_vocabulary(unlabeled, 5, 5), DataError);
}

TEST(Vocabulary, FileRoundTripAndLayout) {
  const auto v = build_vocabulary(presence_corpus(), 3, 1);
  const auto dir = testing_support::scratch_dir("vocab_roundtrip");
  write_vocabulary(dir / "v.tsv", v);
  const auto back = read_vocabulary(dir / "v.tsv");
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.digest(), v.digest());
  for (std::size_t i = 0; i < v.api_tokens().size(); ++i) {
    EXPECT_EQ(v.token_at(i).first, TokenKind::kApi);
  }
  EXPECT_EQ(v.token_at(v.api_tokens().size()).first, TokenKind::kString);
}

TEST(Vocabulary, RejectsMissingHeader) {
  EXPECT_THROW(Vocabulary::parse("api\tfoo\t1\n"), DataError);
}

TEST(Embed, CountsOccurrences) {
  const auto v = tiny_vocab();
  const auto g = graph({node("main", {"CreateFileW", "CreateFileW", "RegSetValueA"}, {"hello world"})});
  const auto f = embed_graph(g, v);
  ASSERT_EQ(f.n(), 1u);
  ASSERT_EQ(f.d(), 4u);
  EXPECT_EQ(f.at(0, *v.index_of(TokenKind::kApi, "createfilew")), 2.0);
  EXPECT_EQ(f.at(0, *v.index_of(TokenKind::kApi, "regsetvaluea")), 1.0);
  EXPECT_EQ(f.at(0, *v.index_of(TokenKind::kString, "hello world")), 1.0);
  EXPECT_EQ(f.at(0, *v.index_of(TokenKind::kString, "abcd")), 0.0);
}

TEST(Embed, OutOfVocabularyRowIsZero) {
  const auto f = embed_graph(graph({node("main", {"Nope"}, {"nothing here"})}), tiny_vocab());
  EXPECT_EQ(f.counts.nonZeros(), 0);
}

TEST(Embed, ShortStringNeverCounts) {
  const Vocabulary v({"x"}, {1.0}, {"abcd"}, {1.0}, 1, 1);
  EXPECT_THROW(Vocabulary({"x"}, {1.0}, {"abc"}, {1.0}, 1, 1), DataError);
  const auto f = embed_graph(graph({node("main", {}, {"abc", "ABC"})}), v);
  EXPECT_EQ(f.counts.nonZeros(), 0);
}

TEST(Embed, AddingTokenRaisesExactlyOneEntry) {
  const auto v = tiny_vocab();
  auto g = graph({node("main", {"CreateFileW"}), node("f1", {}, {"abcd"})}, {{"main", "f1"}});
  const auto before = embed_graph(g, v);
  g.nodes[1].apis.push_back("REGSETVALUEA");
  const auto after = embed_graph(g, v);
  Eigen::MatrixXd diff = Eigen::MatrixXd(after.counts) - Eigen::MatrixXd(before.counts);
  EXPECT_EQ(diff.sum(), 1.0);
  EXPECT_EQ(diff.minCoeff(), 0.0);
  EXPECT_EQ(diff(1, *v.index_of(TokenKind::kApi, "regsetvaluea")), 1.0);
  EXPECT_EQ(after.node_order, (std::vector<std::string>{"main", "f1"}));
}
