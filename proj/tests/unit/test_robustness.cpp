#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/robustness.hpp"

using namespace mal2gcn;
using testing_support::graph;
using testing_support::node;

namespace {

// 40 tokens across three nodes.
Fcg forty_token_graph() {
  std::vector<std::string> apis(10, "CreateFileW");
  std::vector<std::string> strs(10, "some string");
  return graph({node("main", apis, strs), node("f1", apis), node("f2", {}, strs)},
               {{"main", "f1"}, {"f1", "f2"}});
}

BenignPool small_pool() {
  BenignPool p;
  p.apis = {"getwindowtexta", "loadlibraryw", "sleep"};
  p.strings = {"hello world", "benign text"};
  return p;
}

Vocabulary vocab() {
  return Vocabulary({"createfilew", "getwindowtexta", "loadlibraryw", "sleep"}, {1, 1, 1, 1},
                    {"some string", "hello world", "benign text"}, {1, 1, 1}, 4, 3);
}

AttackModes only_existing() { return {true, false}; }

}  // namespace

TEST(ApplyPerturbation, EmptyIsIdentity) {
  const auto g = forty_token_graph();
  EXPECT_EQ(apply_perturbation(g, Perturbation{}), g);
}

TEST(ApplyPerturbation, TokenRaisesCountByOne) {
  const auto g = forty_token_graph();
  Perturbation p;
  p.token_additions["f1"].apis.push_back("getwindowtexta");
  const auto out = apply_perturbation(g, p);
  EXPECT_EQ(out.nodes[1].apis.size(), g.nodes[1].apis.size() + 1);
  EXPECT_EQ(out.label, g.label);
  const auto v = vocab();
  const auto before = embed_graph(g, v);
  const auto after = embed_graph(out, v);
  const auto idx = *v.index_of(TokenKind::kApi, "getwindowtexta");
  EXPECT_EQ(after.at(1, idx) - before.at(1, idx), 1.0);
  EXPECT_EQ((Eigen::MatrixXd(after.counts) - Eigen::MatrixXd(before.counts)).sum(), 1.0);
}

TEST(ApplyPerturbation, DeadNode) {
  const auto g = forty_token_graph();
  Perturbation p;
  p.new_nodes.push_back(node("dead", {"sleep", "sleep", "sleep"}, {"hello world", "benign text"}));
  p.new_edges.emplace_back("main", "dead");
  const auto out = apply_perturbation(g, p);
  EXPECT_EQ(out.nodes.size(), g.nodes.size() + 1);
  EXPECT_EQ(out.edges.size(), g.edges.size() + 1);
  EXPECT_TRUE(validate_fcg(out).ok());
  EXPECT_TRUE(validate_fcg(out).warnings.empty());
}

TEST(ApplyPerturbation, UnknownNode) {
  Perturbation p;
  p.token_additions["nope"].apis.push_back("sleep");
  EXPECT_THROW(apply_perturbation(forty_token_graph(), p), DataError);
  Perturbation q;
  q.new_nodes.push_back(node("dead", {"sleep"}));
  q.new_edges.emplace_back("ghost", "dead");
  EXPECT_THROW(apply_perturbation(forty_token_graph(), q), DataError);
}

TEST(GenerateAttack, ZeroOverheadIsEmpty) {
  EXPECT_TRUE(generate_attack(forty_token_graph(), small_pool(), 0, {}, 1).empty());
  // An empty pool is fine while nothing is injected.
  EXPECT_TRUE(generate_attack(forty_token_graph(), BenignPool{}, 0, {}, 1).empty());
}

TEST(GenerateAttack, BudgetIsExact) {
  const auto g = forty_token_graph();
  ASSERT_EQ(g.total_tokens(), 40u);
  EXPECT_EQ(generate_attack(g, small_pool(), 100, only_existing(), 5).injected_tokens(), 40u);
  EXPECT_EQ(generate_attack(g, small_pool(), 100, {false, true}, 5).injected_tokens(), 40u);
  EXPECT_EQ(generate_attack(g, small_pool(), 100, {}, 5).injected_tokens(), 40u);
  EXPECT_EQ(generate_attack(g, small_pool(), 12.5, {}, 5).injected_tokens(), 5u);
}

TEST(GenerateAttack, DeadNodeCount) {
  const auto g = forty_token_graph();
  const auto p = generate_attack(g, small_pool(), 150, {false, true}, 5);
  EXPECT_EQ(p.injected_tokens(), 60u);
  EXPECT_EQ(p.new_nodes.size(), 3u);
  EXPECT_TRUE(p.token_additions.empty());
  const auto q = generate_attack(g, small_pool(), 150, {false, true}, 5, 0.5, 7);
  EXPECT_EQ(q.new_nodes.size(), 9u);  // ceil(60 / 7)
  const auto out = apply_perturbation(g, q);
  EXPECT_TRUE(validate_fcg(out).ok());
}

TEST(GenerateAttack, Deterministic) {
  const auto g = forty_token_graph();
  EXPECT_EQ(generate_attack(g, small_pool(), 200, {}, 77),
            generate_attack(g, small_pool(), 200, {}, 77));
  EXPECT_FALSE(generate_attack(g, small_pool(), 200, {}, 77) ==
               generate_attack(g, small_pool(), 200, {}, 78));
}

TEST(GenerateAttack, BudgetsNest) {
  const auto g = forty_token_graph();
  const auto small = generate_attack(g, small_pool(), 50, only_existing(), 3);
  const auto large = generate_attack(g, small_pool(), 200, only_existing(), 3);
  const auto v = vocab();
  const Eigen::MatrixXd a = Eigen::MatrixXd(embed_graph(apply_perturbation(g, small), v).counts);
  const Eigen::MatrixXd b = Eigen::MatrixXd(embed_graph(apply_perturbation(g, large), v).counts);
  EXPECT_TRUE((b.array() >= a.array()).all());
}

TEST(GenerateAttack, TargetFractionLimitsTouchedNodes) {
  const auto g = forty_token_graph();
  const auto p = generate_attack(g, small_pool(), 500, only_existing(), 3, 1.0 / 3.0);
  EXPECT_EQ(p.token_additions.size(), 1u);
}

TEST(GenerateAttack, EmptyPoolWithBudgetFails) {
  EXPECT_THROW(generate_attack(forty_token_graph(), BenignPool{}, 10, {}, 1), DataError);
}

TEST(Pool, RoundTripAndErrors) {
  const auto p = small_pool();
  EXPECT_EQ(parse_pool(serialize_pool(p)), p);
  EXPECT_THROW(parse_pool(""), DataError);
  EXPECT_THROW(parse_pool(serialize_pool(p) + "bogus\tx\n"), DataError);
}

TEST(Modes, Parse) {
  EXPECT_EQ(parse_modes("inject_existing"), (AttackModes{true, false}));
  EXPECT_EQ(parse_modes("inject_existing,add_dead_nodes"), (AttackModes{true, true}));
  EXPECT_THROW(parse_modes("delete_everything"), DataError);
}

TEST(AttackSweep, EmptyCorpusGivesEmptyReport) {
  const auto m = init_params({7, 3, 3, 2}, true, true, Readout::kAvg, 1);
  const auto r = attack_sweep(m, vocab(), Corpus{}, small_pool(), AttackConfig{});
  EXPECT_TRUE(r.samples.empty());
  EXPECT_EQ(r.originally_detected, 0u);
}

TEST(AttackSweep, NonNegativeModelNeverEvadedByInjection) {
  std::mt19937_64 rng(12);
  const auto v = vocab();
  Corpus malware;
  for (int i = 0; i < 8; ++i) {
    auto g = forty_token_graph();
    g.graph_id = "m" + std::to_string(i);
    malware.records.push_back(g);
  }
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = testing_support::random_model({7, 4, 4, 3}, true, true,
                                                 static_cast<Readout>(trial % 3), rng);
    AttackConfig cfg;
    cfg.modes = only_existing();
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto r = attack_sweep(m, v, malware, small_pool(), cfg, 2);
    for (std::size_t o = 0; o < cfg.overheads.size(); ++o) EXPECT_EQ(r.evasions_at(o), 0u);
    for (const auto& s : r.samples) {
      for (std::size_t o = 0; o < s.adv_scores.size(); ++o) {
        EXPECT_GE(s.adv_scores[o], s.original_score - 1e-9);
        if (o > 0) EXPECT_GE(s.adv_scores[o], s.adv_scores[o - 1] - 1e-9);
      }
    }
  }
}

TEST(AttackSweep, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(5);
  const auto m = testing_support::random_model({7, 4, 4, 3}, false, false, Readout::kAvg, rng);
  Corpus malware;
  for (int i = 0; i < 6; ++i) {
    auto g = forty_token_graph();
    g.graph_id = "m" + std::to_string(i);
    malware.records.push_back(g);
  }
  const auto a = attack_sweep(m, vocab(), malware, small_pool(), AttackConfig{}, 1);
  const auto b = attack_sweep(m, vocab(), malware, small_pool(), AttackConfig{}, 3);
  ReportMeta meta{"t", 0, {}};
  EXPECT_EQ(format_attack_report(a, meta), format_attack_report(b, meta));
}

TEST(Monotonicity, NonNegativeModelPasses) {
  std::mt19937_64 rng(8);
  const auto m = testing_support::random_model({7, 4, 4, 3}, true, true, Readout::kSum, rng);
  Corpus c;
  c.records.push_back(forty_token_graph());
  const auto r = check_monotonicity(m, vocab(), c, 200, 1);
  EXPECT_FALSE(r.informational);
  EXPECT_EQ(r.trials, 200u);
  EXPECT_TRUE(r.passed());
  EXPECT_GE(r.min_input_gradient, -kGradientSlack);
}

TEST(Monotonicity, UnconstrainedIsInformational) {
  std::mt19937_64 rng(8);
  const auto m = testing_support::random_model({7, 4, 4, 3}, false, false, Readout::kAvg, rng);
  Corpus c;
  c.records.push_back(forty_token_graph());
  EXPECT_TRUE(check_monotonicity(m, vocab(), c, 50, 1).informational);
}
