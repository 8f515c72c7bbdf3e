#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/fcg.hpp"

using namespace mal2gcn;
using testing_support::graph;
using testing_support::node;

namespace {

bool has_message(const std::vector<std::string>& list, const std::string& needle) {
  return std::any_of(list.begin(), list.end(),
                     [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Validate, UnknownEdgeEndpoint) {
  const auto g = graph({node("main"), node("f1")}, {{"main", "f9"}});
  const auto r = validate_fcg(g);
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_message(r.errors, "unknown edge endpoint f9"));
}

TEST(Validate, SingleNodeIsValid) {
  const auto r = validate_fcg(graph({node("main")}));
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Validate, DuplicateId) {
  const auto r = validate_fcg(graph({node("main"), node("f1"), node("f1")}, {{"main", "f1"}}));
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_message(r.errors, "duplicate id"));
}

TEST(Validate, MissingMainAndEmptyId) {
  EXPECT_FALSE(validate_fcg(graph({node("f1")}, {}, "main")).ok());
  EXPECT_FALSE(validate_fcg(graph({node("main"), node("")})).ok());
}

TEST(Validate, IsolationIsOnlyAWarning) {
  const auto r = validate_fcg(graph({node("main"), node("f1")}));
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(has_message(r.warnings, "f1"));
}

TEST(Normalize, AttachesIsolatedNodeToMain) {
  const auto g = normalize_fcg(graph({node("main"), node("f1")}));
  EXPECT_EQ(g.edges, (std::vector<Edge>{{"main", "f1"}}));
}

TEST(Normalize, LoneMainUnchanged) {
  const auto g = graph({node("main", {"A"})});
  EXPECT_EQ(normalize_fcg(g), g);
}

TEST(Normalize, DedupAndSelfEdges) {
  const auto g =
      normalize_fcg(graph({node("main"), node("f1")}, {{"main", "f1"}, {"main", "f1"}, {"f1", "f1"}}));
  EXPECT_EQ(g.edges, (std::vector<Edge>{{"main", "f1"}}));
}

TEST(Normalize, NodeWithOnlySelfEdgeBecomesAttached) {
  const auto g = normalize_fcg(graph({node("main"), node("f1")}, {{"f1", "f1"}}));
  EXPECT_EQ(g.edges, (std::vector<Edge>{{"main", "f1"}}));
}

TEST(Normalize, Idempotent) {
  const auto g = graph({node("main"), node("a"), node("b"), node("c")},
                       {{"a", "b"}, {"a", "b"}, {"c", "c"}, {"b", "a"}});
  const auto once = normalize_fcg(g);
  EXPECT_EQ(normalize_fcg(once), once);
  EXPECT_EQ(once.nodes, g.nodes);
  EXPECT_TRUE(validate_fcg(once).warnings.empty());
}

TEST(Normalize, KeepsExistingConnectivity) {
  const auto g = graph({node("main"), node("a"), node("b")}, {{"main", "a"}, {"a", "b"}});
  EXPECT_EQ(normalize_fcg(g).edges, g.edges);
}

TEST(Normalize, RejectsInvalid) {
  EXPECT_THROW(normalize_fcg(graph({node("main")}, {{"main", "zz"}})), DataError);
}

TEST(Format, RoundTrip) {
  auto g = graph({node("main", {"CreateFileW", "CreateFileW"}, {"héllo wörld", "a\"b\\c\n"}),
                  node("f1", {}, {}), node("f2", {"X"})},
                 {{"main", "f1"}, {"f1", "f2"}});
  const auto line = format_fcg_record(g);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(parse_fcg_record(line), g);

  g.label.reset();
  EXPECT_EQ(parse_fcg_record(format_fcg_record(g)), g);
}

TEST(Format, CorpusRoundTripThroughFile) {
  Corpus c;
  c.records.push_back(graph({node("main", {"a"})}, {}, "main", Label::kBenign, "b0"));
  c.records.push_back(graph({node("m"), node("x", {}, {"strs"})}, {{"m", "x"}}, "m",
                            Label::kMalware, "m0"));
  const auto dir = testing_support::scratch_dir("fcg_roundtrip");
  write_corpus(dir / "c.fcg", c);
  const auto back = read_corpus(dir / "c.fcg");
  EXPECT_EQ(back.records, c.records);
}

TEST(Format, StrictRejectsUnknownFieldLenientWarns) {
  const std::string line =
      R"({"graph_id":"g","label":"benign","main":"m","nodes":[{"id":"m","apis":[],"strings":[]}],"edges":[],"extra":1})";
  EXPECT_THROW(parse_fcg_record(line, ParseMode::kStrict), DataError);
  std::vector<std::string> warnings;
  const auto g = parse_fcg_record(line, ParseMode::kLenient, &warnings);
  EXPECT_EQ(g.graph_id, "g");
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Format, RejectsMalformedRecords) {
  EXPECT_THROW(parse_fcg_record("{not json"), DataError);
  EXPECT_THROW(parse_fcg_record(R"({"graph_id":"g","label":"evil","main":"m","nodes":[],"edges":[]})"),
               DataError);
  EXPECT_THROW(
      parse_fcg_record(
          R"({"graph_id":"g","label":null,"main":"m","nodes":[{"id":"m","apis":[],"strings":[]}],"edges":[["m"]]})"),
      DataError);
  EXPECT_THROW(parse_fcg_record(R"({"graph_id":"g","label":null,"nodes":[],"edges":[]})"),
               DataError);
}

TEST(Format, ErrorsCarryLineNumber) {
  const std::string good =
      R"({"graph_id":"g","label":null,"main":"m","nodes":[{"id":"m","apis":[],"strings":[]}],"edges":[]})";
  try {
    parse_corpus(good + "\n\n" + "{bad\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(Fcg, TotalTokensAndIndex) {
  const auto g = graph({node("main", {"a", "b"}, {"cccc"}), node("f", {}, {"dddd", "eeee"})});
  EXPECT_EQ(g.total_tokens(), 5u);
  EXPECT_EQ(g.index_of("f"), 1u);
  EXPECT_FALSE(g.index_of("zz").has_value());
}
