#include <gtest/gtest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/featurize.hpp"
#include "mal2gcn/synth.hpp"
#include "mal2gcn/train.hpp"

using namespace mal2gcn;

namespace {

SynthConfig small_config(std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.n_benign = 40;
  cfg.n_malware = 40;
  cfg.max_nodes = 30;
  cfg.seed = seed;
  return cfg;
}

// Pooled (whole-graph) token counts.
std::map<std::string, double> pooled_counts(const Fcg& g) {
  std::map<std::string, double> counts;
  for (const auto& n : g.nodes) {
    for (const auto& t : n.apis) counts["a:" + t] += 1;
    for (const auto& t : n.strings) counts["s:" + t] += 1;
  }
  return counts;
}

// Best training accuracy of any rule "malware iff count(token) >= t" or
// "malware iff count(token) < t", searched exhaustively.
double best_single_token_accuracy(const Corpus& c) {
  std::vector<std::map<std::string, double>> counts;
  std::set<std::string> tokens;
  for (const auto& g : c.records) {
    counts.push_back(pooled_counts(g));
    for (const auto& [t, _] : counts.back()) tokens.insert(t);
  }
  double best = 0.0;
  for (const auto& token : tokens) {
    std::set<double> thresholds{0.0};
    for (const auto& m : counts) {
      auto it = m.find(token);
      thresholds.insert(it == m.end() ? 0.0 : it->second);
      thresholds.insert((it == m.end() ? 0.0 : it->second) + 1.0);
    }
    for (double t : thresholds) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < counts.size(); ++i) {
        auto it = counts[i].find(token);
        const double v = it == counts[i].end() ? 0.0 : it->second;
        hits += ((v >= t) == (c.records[i].label == Label::kMalware)) ? 1 : 0;
      }
      const double acc = static_cast<double>(hits) / static_cast<double>(counts.size());
      best = std::max({best, acc, 1.0 - acc});
    }
  }
  return best;
}

}  // namespace

TEST(Generate, DeterministicBytes) {
  const auto a = generate_corpus(small_config());
  const auto b = generate_corpus(small_config());
  EXPECT_EQ(format_corpus(a.corpus), format_corpus(b.corpus));
  EXPECT_EQ(serialize_pool(a.pool), serialize_pool(b.pool));
  EXPECT_NE(format_corpus(generate_corpus(small_config(2)).corpus), format_corpus(a.corpus));
}

TEST(Generate, ValidNormalizedAndBalanced) {
  const auto cfg = small_config();
  const auto out = generate_corpus(cfg);
  std::size_t mal = 0, ben = 0;
  for (const auto& g : out.corpus.records) {
    const auto v = validate_fcg(g);
    EXPECT_TRUE(v.ok());
    EXPECT_TRUE(v.warnings.empty());
    EXPECT_EQ(normalize_fcg(g), g);
    EXPECT_GE(g.nodes.size(), cfg.min_nodes);
    EXPECT_LE(g.nodes.size(), cfg.max_nodes);
    for (const auto& n : g.nodes) {
      const auto k = n.apis.size() + n.strings.size();
      EXPECT_GE(k, cfg.min_tokens_per_node);
      EXPECT_LE(k, cfg.max_tokens_per_node);
      for (const auto& t : n.apis) EXPECT_EQ(normalize_token(t, TokenKind::kApi), t);
      for (const auto& t : n.strings) EXPECT_EQ(normalize_token(t, TokenKind::kString), t);
    }
    (g.label == Label::kMalware ? mal : ben)++;
  }
  EXPECT_EQ(mal, cfg.n_malware);
  EXPECT_EQ(ben, cfg.n_benign);
}

TEST(Generate, BenignGraphsNeverUseMaliciousTokens) {
  const auto out = generate_corpus(small_config());
  std::set<std::string> pool(out.pool.apis.begin(), out.pool.apis.end());
  pool.insert(out.pool.strings.begin(), out.pool.strings.end());
  for (const auto& g : out.corpus.records) {
    if (g.label != Label::kBenign) continue;
    for (const auto& n : g.nodes) {
      for (const auto& t : n.apis) EXPECT_TRUE(pool.contains(t)) << t;
      for (const auto& t : n.strings) EXPECT_TRUE(pool.contains(t)) << t;
    }
  }
}

TEST(Generate, SeparableConfigHasOneTokenRule) {
  auto cfg = small_config(5);
  cfg.malicious_token_fraction = 1.0;
  cfg.infected_node_fraction = 1.0;
  cfg.pools.malicious_apis = 1;
  cfg.pools.malicious_strings = 0;
  EXPECT_EQ(best_single_token_accuracy(generate_corpus(cfg).corpus), 1.0);
}

TEST(Generate, SeparableConfigIsLinearlySeparable) {
  auto cfg = small_config(6);
  cfg.malicious_token_fraction = 1.0;
  cfg.infected_node_fraction = 1.0;
  const auto out = generate_corpus(cfg);
  std::set<std::string> benign(out.pool.apis.begin(), out.pool.apis.end());
  benign.insert(out.pool.strings.begin(), out.pool.strings.end());
  // Weight 1 on every token outside the benign pool, threshold 1.
  for (const auto& g : out.corpus.records) {
    double score = 0.0;
    for (const auto& [t, c] : pooled_counts(g)) score += benign.contains(t.substr(2)) ? 0.0 : c;
    EXPECT_EQ(score >= 1.0, g.label == Label::kMalware) << g.graph_id;
  }
}

TEST(Generate, NoBenignStillGeneratesButTrainRejects) {
  auto cfg = small_config();
  cfg.n_benign = 0;
  const auto out = generate_corpus(cfg);
  EXPECT_EQ(out.corpus.records.size(), cfg.n_malware);
  for (const auto& g : out.corpus.records) EXPECT_EQ(g.label, Label::kMalware);
  EXPECT_THROW(build_vocabulary(out.corpus, 10, 10), DataError);
  const Vocabulary v({"api_b_000"}, {1}, {"str_b_000"}, {1}, 1, 1);
  EXPECT_THROW(train(out.corpus, out.corpus, v, TrainConfig{}), DataError);
}

TEST(Generate, InvalidConfig) {
  auto cfg = small_config();
  cfg.min_nodes = 10;
  cfg.max_nodes = 5;
  EXPECT_THROW(generate_corpus(cfg), DataError);
  cfg = small_config();
  cfg.malicious_token_fraction = 0.0;
  EXPECT_THROW(generate_corpus(cfg), DataError);
}

TEST(DerivePool, ContainsUniversalBenignToken) {
  auto c = generate_corpus(small_config()).corpus;
  for (auto& g : c.records) {
    if (g.label == Label::kBenign) g.nodes[0].apis.push_back("LoadLibraryW");
  }
  const auto pool = derive_benign_pool(c, 5);
  EXPECT_EQ(pool.apis.front(), "loadlibraryw");
  EXPECT_EQ(pool.apis.size(), 5u);
  EXPECT_EQ(derive_benign_pool(c, 5), pool);
}

TEST(DerivePool, LargeTopKReturnsEverything) {
  Corpus c;
  c.records.push_back(testing_support::graph(
      {testing_support::node("main", {"b", "a", "a"}, {"long string", "abc"})}, {}, "main",
      Label::kBenign));
  c.records.push_back(testing_support::graph({testing_support::node("main", {"evil"})}, {},
                                             "main", Label::kMalware));
  const auto pool = derive_benign_pool(c, 100);
  EXPECT_EQ(pool.apis, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(pool.strings, (std::vector<std::string>{"long string"}));
}

TEST(DerivePool, NoBenign) {
  Corpus c;
  c.records.push_back(testing_support::graph({testing_support::node("main", {"x"})}));
  EXPECT_THROW(derive_benign_pool(c, 3), DataError);
}

TEST(Split, SizesStratifiedDisjointDeterministic) {
  auto cfg = small_config();
  cfg.n_benign = cfg.n_malware = 60;
  const auto out = generate_corpus(cfg);
  const auto s = split_corpus(out.corpus, {60, 20, 20}, 3);
  EXPECT_EQ(s.train.records.size(), 60u);
  EXPECT_EQ(s.val.records.size(), 20u);
  EXPECT_EQ(s.test.records.size(), 20u);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    std::size_t mal = 0;
    for (const auto& g : part->records) {
      EXPECT_TRUE(ids.insert(g.graph_id).second);
      mal += g.label == Label::kMalware ? 1 : 0;
    }
    EXPECT_EQ(mal * 2, part->records.size());
  }
  EXPECT_EQ(format_corpus(split_corpus(out.corpus, {60, 20, 20}, 3).test), format_corpus(s.test));
}
