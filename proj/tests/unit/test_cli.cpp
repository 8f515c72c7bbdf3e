#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "helpers.hpp"
#include "mal2gcn/cli.hpp"
#include "mal2gcn/digest.hpp"
#include "mal2gcn/fcg.hpp"
#include "mal2gcn/text.hpp"

using namespace mal2gcn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Tiny corpus, vocabulary and non-negative model shared by the pipeline tests.
const fs::path& pipeline_dir() {
  static const fs::path dir = [] {
    const auto d = testing_support::scratch_dir("cli_pipeline");
    const auto s = d.string();
    EXPECT_EQ(run({"gen-corpus", "--out", s, "--train", "80", "--val", "20", "--test", "20",
                   "--max-nodes", "20", "--seed", "4"})
                  .code,
              0);
    EXPECT_EQ(run({"build-vocab", "--corpus", s + "/train.fcg", "--out", s + "/vocab.tsv",
                   "--k-api", "50", "--k-str", "50"})
                  .code,
              0);
    EXPECT_EQ(run({"train", "--corpus", s + "/train.fcg", "--val", s + "/val.fcg", "--vocab",
                   s + "/vocab.tsv", "--out", s + "/model.txt", "--nonneg-gcn", "true",
                   "--nonneg-gclf", "true", "--epochs", "3", "--h1", "8", "--h2", "6", "--hg",
                   "4", "--seed", "2"})
                  .code,
              0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kUsageError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run({"train"}).code, cli::kUsageError);
  EXPECT_EQ(run({"--version"}).code, cli::kOk);
}

TEST(Cli, MissingFileIsDataError) {
  const auto r = run({"inspect", "--corpus", "/nonexistent/corpus.fcg"});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
}

TEST(Cli, TrainRejectsUnlabeledCorpus) {
  const auto d = pipeline_dir().string();
  auto corpus = read_corpus(d + "/train.fcg");
  corpus.records[4].label.reset();
  write_corpus(d + "/unlabeled.fcg", corpus);
  const auto r = run({"train", "--corpus", d + "/unlabeled.fcg", "--val", d + "/val.fcg",
                      "--vocab", d + "/vocab.tsv", "--out", d + "/never.txt", "--epochs", "1"});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find(corpus.records[4].graph_id), std::string::npos) << r.err;
}

TEST(Cli, EvalReportIsConsistent) {
  const auto d = pipeline_dir().string();
  ASSERT_EQ(run({"eval", "--model", d + "/model.txt", "--vocab", d + "/vocab.tsv", "--corpus",
                 d + "/test.fcg", "--out", d + "/metrics.json"})
                .code,
            0);
  const auto doc = nlohmann::json::parse(read_text_file(d + "/metrics.json"));
  const double tp = doc["tp"], fp = doc["fp"], tn = doc["tn"], fn = doc["fn"];
  EXPECT_EQ(tp + fp + tn + fn, 20.0);
  EXPECT_NEAR(doc["accuracy"].get<double>(), (tp + tn) / 20.0, 1e-12);
  if (tp + fp > 0) EXPECT_NEAR(doc["precision"].get<double>(), tp / (tp + fp), 1e-12);
  if (tp + fn > 0) EXPECT_NEAR(doc["recall"].get<double>(), tp / (tp + fn), 1e-12);
  EXPECT_TRUE(doc.contains("tool_version"));
  const auto& roc = doc["roc_points"];
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i][0].get<double>() - roc[i - 1][0].get<double>()) *
            (roc[i][1].get<double>() + roc[i - 1][1].get<double>()) / 2.0;
  }
  EXPECT_NEAR(area, doc["auc"].get<double>(), 1e-12);
  EXPECT_TRUE(fs::exists(d + "/metrics.json.roc.csv"));
}

TEST(Cli, CheckMonotoneOnNonNegativeModel) {
  const auto d = pipeline_dir().string();
  const auto r = run({"check-monotone", "--model", d + "/model.txt", "--vocab", d + "/vocab.tsv",
                      "--corpus", d + "/test.fcg", "--trials", "100"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
}

TEST(Cli, AttackReportsAreReproducible) {
  const auto d = pipeline_dir().string();
  const std::vector<std::string> base{"attack", "--model", d + "/model.txt", "--vocab",
                                      d + "/vocab.tsv", "--corpus", d + "/test.fcg", "--pool",
                                      d + "/pool.tsv", "--overheads", "0,50,200", "--seed", "3"};
  auto a = base;
  a.insert(a.end(), {"--out", d + "/attack_a.txt"});
  auto b = base;
  b.insert(b.end(), {"--out", d + "/attack_b.txt", "--threads", "3"});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(sha256_file(d + "/attack_a.txt"), sha256_file(d + "/attack_b.txt"));
}

TEST(Cli, RefusesToOverwriteInput) {
  const auto d = pipeline_dir().string();
  const auto r = run({"build-vocab", "--corpus", d + "/train.fcg", "--out", d + "/train.fcg"});
  EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(Cli, Inspect) {
  const auto d = pipeline_dir().string();
  const auto r = run({"inspect", "--corpus", d + "/test.fcg", "--vocab", d + "/vocab.tsv"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("distinct_features="), std::string::npos);
  EXPECT_EQ(run({"inspect", "--corpus", d + "/test.fcg", "--graph", "nope"}).code,
            cli::kDataError);
}
