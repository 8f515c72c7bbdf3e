#include "mal2gcn/cli.hpp"

#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mal2gcn/digest.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/fcg.hpp"
#include "mal2gcn/featurize.hpp"
#include "mal2gcn/gcn.hpp"
#include "mal2gcn/metrics.hpp"
#include "mal2gcn/parallel.hpp"
#include "mal2gcn/robustness.hpp"
#include "mal2gcn/synth.hpp"
#include "mal2gcn/text.hpp"
#include "mal2gcn/train.hpp"

namespace mal2gcn::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

// Raised when a check ran to completion and found problems.
class CheckFailure : public Error {
 public:
  using Error::Error;
};

struct CommonOptions {
  std::uint64_t seed = 42;
  bool strict = false;
  std::size_t threads = 1;
};

void require_distinct(const fs::path& output, std::initializer_list<const fs::path*> inputs) {
  std::error_code ec;
  const auto out = fs::weakly_canonical(output, ec);
  for (const auto* in : inputs) {
    if (in->empty()) continue;
    if (fs::weakly_canonical(*in, ec) == out) {
      throw UsageError("output path " + output.string() + " would overwrite input " + in->string());
    }
  }
}

Corpus load_corpus(const fs::path& path, const CommonOptions& common, std::ostream& err) {
  std::vector<std::string> warnings;
  auto corpus = read_corpus(path, common.strict ? ParseMode::kStrict : ParseMode::kLenient,
                            &warnings);
  if (!warnings.empty()) {
    err << "warning: " << path.string() << ": " << warnings.front();
    if (warnings.size() > 1) err << " (and " << warnings.size() - 1 << " more)";
    err << "\n";
  }
  for (const auto& g : corpus.records) {
    const auto check = validate_fcg(g);
    if (!check.ok()) {
      throw DataError(path.string() + ": graph " + g.graph_id + ": " + check.errors.front());
    }
  }
  return corpus;
}

ordered_json meta_json(std::uint64_t seed, const std::map<std::string, std::string>& inputs) {
  ordered_json doc;
  doc["tool_version"] = std::string(kToolVersion);
  doc["seed"] = seed;
  doc["inputs"] = inputs;
  return doc;
}

void write_json(const fs::path& path, const ordered_json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

fs::path with_suffix(const fs::path& path, std::string_view suffix) {
  return fs::path(path.string() + std::string(suffix));
}

std::vector<double> parse_overheads(std::string_view csv) {
  std::vector<double> out;
  for (auto field : split_fields(csv, ',')) {
    if (field.empty()) continue;
    out.push_back(parse_double(field, "--overheads"));
  }
  return out;
}

// ------------------------------------------------------------- gen-corpus

struct GenOptions {
  fs::path out;
  std::size_t train = 2000, val = 500, test = 500;
  long long n_benign = -1, n_malware = -1;
  std::size_t min_nodes = 5, max_nodes = 200;
  double malicious_fraction = 0.6;
  double infected_fraction = 0.3;
};

void gen_corpus(const GenOptions& o, const CommonOptions& common, std::ostream& out) {
  SynthConfig cfg;
  cfg.seed = common.seed;
  const std::size_t total = o.train + o.val + o.test;
  cfg.n_benign = o.n_benign >= 0 ? static_cast<std::size_t>(o.n_benign)
                                 : o.train / 2 + o.val / 2 + o.test / 2;
  cfg.n_malware = o.n_malware >= 0 ? static_cast<std::size_t>(o.n_malware) : total - cfg.n_benign;
  cfg.min_nodes = o.min_nodes;
  cfg.max_nodes = o.max_nodes;
  cfg.malicious_token_fraction = o.malicious_fraction;
  cfg.infected_node_fraction = o.infected_fraction;

  auto synth = generate_corpus(cfg);
  fs::create_directories(o.out);
  write_corpus(o.out / "corpus.fcg", synth.corpus);
  write_pool(o.out / "pool.tsv", synth.pool);
  const SplitSizes sizes{o.train, o.val, o.test};
  if (total > 0) {
    auto splits = split_corpus(synth.corpus, sizes, mix_seed(common.seed, 0x5b));
    write_corpus(o.out / "train.fcg", splits.train);
    write_corpus(o.out / "val.fcg", splits.val);
    write_corpus(o.out / "test.fcg", splits.test);
  }
  write_text_file(o.out / "manifest.json", synth_manifest(cfg, total > 0 ? &sizes : nullptr));
  out << "wrote " << synth.corpus.records.size() << " graphs to " << o.out.string() << "\n";
}

// ------------------------------------------------------------ build-vocab

struct VocabOptions {
  fs::path corpus, out;
  std::size_t k_api = 500, k_str = 500, prefilter = 5000;
};

void build_vocab(const VocabOptions& o, const CommonOptions& common, std::ostream& out,
                 std::ostream& err) {
  require_distinct(o.out, {&o.corpus});
  const auto corpus = load_corpus(o.corpus, common, err);
  SelectionConfig selection;
  selection.prefilter = o.prefilter;
  const auto vocab = build_vocabulary(corpus, o.k_api, o.k_str, selection);
  write_vocabulary(o.out, vocab);
  if (vocab.api_shortfall() || vocab.string_shortfall()) {
    err << "note: vocabulary short by " << vocab.api_shortfall() << " api and "
        << vocab.string_shortfall() << " string tokens\n";
  }
  out << "vocabulary: " << vocab.api_tokens().size() << " api + " << vocab.string_tokens().size()
      << " string tokens, sha256 " << vocab.digest() << "\n";
}

// ------------------------------------------------------------------ train

struct TrainOptions {
  fs::path corpus, val, vocab, out, pool, report;
  bool nonneg_gcn = false, nonneg_gclf = false;
  std::size_t adv_train = 0;
  std::size_t patience = 3, epochs = 100, batch = 32;
  double lr = 0.008;
  std::string readout = "avg";
  std::size_t h1 = 500, h2 = 250, hg = 64;
  std::string projection = "per_epoch";
};

void train_cmd(const TrainOptions& o, const CommonOptions& common, std::ostream& out,
               std::ostream& err) {
  require_distinct(o.out, {&o.corpus, &o.val, &o.vocab, &o.pool});
  const auto train_set = load_corpus(o.corpus, common, err);
  const auto val_set = load_corpus(o.val, common, err);
  const auto vocab = read_vocabulary(o.vocab);

  TrainConfig cfg;
  cfg.seed = common.seed;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.patience = o.patience;
  cfg.max_epochs = o.epochs;
  cfg.h1 = o.h1;
  cfg.h2 = o.h2;
  cfg.hg = o.hg;
  cfg.readout = parse_readout(o.readout);
  cfg.nonneg_gcn = o.nonneg_gcn;
  cfg.nonneg_gclf = o.nonneg_gclf;
  if (o.projection == "per_step") {
    cfg.projection_cadence = ProjectionCadence::kPerStep;
  } else if (o.projection != "per_epoch") {
    throw UsageError("--projection must be per_epoch or per_step");
  }
  if (o.adv_train > 0) {
    if (o.pool.empty()) throw UsageError("--adv-train needs --pool");
    AdversarialTraining at;
    at.count = o.adv_train;
    at.pool = read_pool(o.pool);
    at.attack.seed = common.seed;
    cfg.adversarial_training = std::move(at);
  }

  auto result = train(train_set, val_set, vocab, cfg, [&err](const EpochStats& s) {
    err << "epoch " << s.epoch << " train_loss=" << s.train_loss
        << " train_acc=" << s.train_accuracy << " val_loss=" << s.val_loss
        << " val_acc=" << s.val_accuracy << "\n";
  });
  save_model(o.out, result.model, vocab);

  std::map<std::string, std::string> inputs{{"train", sha256_file(o.corpus)},
                                            {"val", sha256_file(o.val)},
                                            {"vocab", sha256_file(o.vocab)}};
  if (!o.pool.empty()) inputs["pool"] = sha256_file(o.pool);
  auto doc = meta_json(common.seed, inputs);
  doc["format"] = "mal2gcn-train-report v1";
  doc["config"] = {{"learning_rate", cfg.learning_rate},
                   {"batch_size", cfg.batch_size},
                   {"patience", cfg.patience},
                   {"max_epochs", cfg.max_epochs},
                   {"dims", {vocab.dim(), cfg.h1, cfg.h2, cfg.hg}},
                   {"readout", std::string(to_string(cfg.readout))},
                   {"nonneg_gcn", cfg.nonneg_gcn},
                   {"nonneg_gclf", cfg.nonneg_gclf},
                   {"projection", o.projection},
                   {"adversarial_training", o.adv_train}};
  auto epochs = ordered_json::array();
  for (const auto& e : result.report.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy}});
  }
  doc["epochs"] = std::move(epochs);
  doc["best_epoch"] = result.report.best_epoch;
  doc["stop_reason"] = std::string(to_string(result.report.stop_reason));
  doc["adversarial_added"] = result.report.adversarial_added;
  doc["nonneg_audit_passed"] = result.report.nonneg_audit_passed;
  doc["model_sha256"] = sha256_file(o.out);
  write_json(o.report.empty() ? with_suffix(o.out, ".train.json") : o.report, doc);

  const auto& best = result.report.epochs.at(result.report.best_epoch - 1);
  out << "trained " << result.report.epochs.size() << " epochs, best epoch "
      << result.report.best_epoch << " val_acc=" << best.val_accuracy << "\n";
}

// ------------------------------------------------------------------- eval

struct ModelInputs {
  fs::path model, vocab, corpus;
};

std::vector<double> score_corpus(const ModelParams& model, const Vocabulary& vocab,
                                 const Corpus& corpus, std::size_t threads) {
  std::vector<double> scores(corpus.records.size());
  parallel_for(corpus.records.size(), threads, [&](std::size_t i) {
    const auto sample = make_sample(corpus.records[i], vocab);
    scores[i] = forward(model, sample.adj, sample.x);
  });
  return scores;
}

void eval_cmd(const ModelInputs& in, const fs::path& out_path, const CommonOptions& common,
              std::ostream& out, std::ostream& err) {
  require_distinct(out_path, {&in.model, &in.vocab, &in.corpus});
  const auto vocab = read_vocabulary(in.vocab);
  const auto model = load_model(in.model, vocab);
  const auto corpus = load_corpus(in.corpus, common, err);
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (!corpus.records[i].label) {
      throw DataError("record " + std::to_string(i + 1) + " (graph " +
                      corpus.records[i].graph_id + ") has no label");
    }
  }
  const auto scores = score_corpus(model, vocab, corpus, common.threads);
  std::vector<ScoredLabel> scored;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scored.push_back({scores[i], corpus.records[i].label == Label::kMalware ? 1 : 0});
  }
  const auto metrics = compute_metrics(scored);

  auto doc = meta_json(common.seed, {{"model", sha256_file(in.model)},
                                     {"vocab", sha256_file(in.vocab)},
                                     {"corpus", sha256_file(in.corpus)}});
  doc["format"] = "mal2gcn-metrics v1";
  doc["threshold"] = kDecisionThreshold;
  doc["samples"] = scored.size();
  doc["tp"] = metrics.tp;
  doc["fp"] = metrics.fp;
  doc["tn"] = metrics.tn;
  doc["fn"] = metrics.fn;
  doc["accuracy"] = metrics.accuracy;
  doc["precision"] = metrics.precision;
  doc["recall"] = metrics.recall;
  doc["f1"] = metrics.f1;
  doc["auc"] = metrics.auc ? ordered_json(*metrics.auc) : ordered_json(nullptr);
  auto roc = ordered_json::array();
  if (metrics.roc_points) {
    // +inf thresholds are written as null.
    for (const auto& p : *metrics.roc_points) roc.push_back({p.fpr, p.tpr, p.threshold});
  }
  doc["roc_points"] = std::move(roc);
  write_json(out_path, doc);
  write_text_file(with_suffix(out_path, ".roc.csv"), format_roc_csv(metrics));
  out << "accuracy=" << metrics.accuracy << " precision=" << metrics.precision
      << " recall=" << metrics.recall << " f1=" << metrics.f1;
  if (metrics.auc) out << " auc=" << *metrics.auc;
  out << "\n";
}

// ----------------------------------------------------------------- attack

struct AttackOptions {
  fs::path pool;
  std::string overheads;
  std::string modes = "inject_existing,add_dead_nodes";
  std::size_t trials = 1;
  double target_fraction = 0.5;
  std::size_t dead_tokens = 20;
  bool stop_at_first = false;
};

void attack_cmd(const ModelInputs& in, const AttackOptions& o, const fs::path& out_path,
                const CommonOptions& common, std::ostream& out, std::ostream& err) {
  require_distinct(out_path, {&in.model, &in.vocab, &in.corpus, &o.pool});
  const auto vocab = read_vocabulary(in.vocab);
  const auto model = load_model(in.model, vocab);
  const auto corpus = load_corpus(in.corpus, common, err);
  const auto pool = read_pool(o.pool);

  Corpus malware;
  std::size_t skipped = 0;
  for (const auto& g : corpus.records) {
    if (g.label == Label::kMalware) {
      malware.records.push_back(g);
    } else {
      ++skipped;
    }
  }
  if (skipped) err << "note: skipped " << skipped << " non-malware records\n";

  AttackConfig cfg;
  if (!o.overheads.empty()) cfg.overheads = parse_overheads(o.overheads);
  cfg.modes = parse_modes(o.modes);
  cfg.seed = common.seed;
  cfg.trials_per_sample = o.trials;
  cfg.target_fraction = o.target_fraction;
  cfg.tokens_per_dead_node = o.dead_tokens;
  cfg.stop_at_first_evasion = o.stop_at_first;
  const auto report = attack_sweep(model, vocab, malware, pool, cfg, common.threads);

  ReportMeta meta{std::string(kToolVersion), common.seed,
                  {{"model", sha256_file(in.model)},
                   {"vocab", sha256_file(in.vocab)},
                   {"corpus", sha256_file(in.corpus)},
                   {"pool", sha256_file(o.pool)}}};
  write_text_file(out_path, format_attack_report(report, meta));
  out << "attacked " << report.samples.size() << " malware samples ("
      << report.originally_detected << " originally detected)\n";
  for (const auto& p : report.curve) {
    out << "  overhead " << p.overhead_pct << "%: success_rate=" << p.success_rate
        << " robust_accuracy=" << p.robust_accuracy_detected << "\n";
  }
}

// --------------------------------------------------------- check-monotone

void check_monotone_cmd(const ModelInputs& in, std::size_t trials, const fs::path& out_path,
                        const CommonOptions& common, std::ostream& out, std::ostream& err) {
  if (!out_path.empty()) require_distinct(out_path, {&in.model, &in.vocab, &in.corpus});
  const auto vocab = read_vocabulary(in.vocab);
  const auto model = load_model(in.model, vocab);
  const auto corpus = load_corpus(in.corpus, common, err);
  const auto report = check_monotonicity(model, vocab, corpus, trials, common.seed);
  if (!out_path.empty()) {
    ReportMeta meta{std::string(kToolVersion), common.seed,
                    {{"model", sha256_file(in.model)},
                     {"vocab", sha256_file(in.vocab)},
                     {"corpus", sha256_file(in.corpus)}}};
    write_text_file(out_path, format_monotonicity_report(report, meta));
  }
  out << "trials=" << report.trials << " violations=" << report.violations.size()
      << " max_violation=" << report.max_violation
      << " min_input_gradient=" << report.min_input_gradient
      << (report.informational ? " (informational: model is not fully non-negative)" : "") << "\n";
  if (!report.informational && !report.passed()) {
    throw CheckFailure("monotonicity violated in " + std::to_string(report.violations.size()) +
                       " trials and " + std::to_string(report.gradient_violations) +
                       " gradient audits");
  }
}

// ---------------------------------------------------------------- inspect

void inspect_cmd(const fs::path& corpus_path, const fs::path& vocab_path, const std::string& id,
                 const CommonOptions& common, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(corpus_path, common, err);
  if (corpus.records.empty()) throw DataError("corpus is empty");
  const Fcg* picked = &corpus.records.front();
  if (!id.empty()) {
    picked = nullptr;
    for (const auto& g : corpus.records) {
      if (g.graph_id == id) picked = &g;
    }
    if (!picked) throw DataError("no graph with id " + id);
  }
  const auto check = validate_fcg(*picked);
  const Fcg g = normalize_fcg(*picked);
  out << "graph " << g.graph_id << " label="
      << (g.label ? std::string(to_string(*g.label)) : std::string("none")) << " main=" << g.main_id
      << " nodes=" << g.nodes.size() << " edges=" << g.edges.size()
      << " tokens=" << g.total_tokens() << "\n";
  for (const auto& w : check.warnings) out << "  warning: " << w << " (repaired)\n";
  std::optional<FeatureMatrix> features;
  std::optional<Vocabulary> vocab;
  if (!vocab_path.empty()) {
    vocab = read_vocabulary(vocab_path);
    features = embed_graph(g, *vocab);
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& node = g.nodes[i];
    out << "  " << node.id << ": apis=" << node.apis.size() << " strings=" << node.strings.size();
    if (features) {
      double hits = 0.0;
      std::size_t distinct = 0;
      for (SparseFeatures::InnerIterator it(features->counts, static_cast<Eigen::Index>(i)); it;
           ++it) {
        hits += it.value();
        ++distinct;
      }
      out << " in_vocab=" << hits << " distinct_features=" << distinct;
    }
    out << "\n";
  }
  for (const auto& [caller, callee] : g.edges) out << "  " << caller << " -> " << callee << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Function-call-graph malware classifier with monotone (non-negative) training",
               "mal2gcn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CommonOptions common;
  auto add_common = [&common](CLI::App* sub, bool threads) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_flag("--strict", common.strict, "Reject unknown fields in graph records");
    if (threads) sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus with splits");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--train", gen.train)->capture_default_str();
  gen_cmd->add_option("--val", gen.val)->capture_default_str();
  gen_cmd->add_option("--test", gen.test)->capture_default_str();
  gen_cmd->add_option("--n-benign", gen.n_benign, "Override benign count");
  gen_cmd->add_option("--n-malware", gen.n_malware, "Override malware count");
  gen_cmd->add_option("--min-nodes", gen.min_nodes)->capture_default_str();
  gen_cmd->add_option("--max-nodes", gen.max_nodes)->capture_default_str();
  gen_cmd->add_option("--malicious-fraction", gen.malicious_fraction)->capture_default_str();
  gen_cmd->add_option("--infected-fraction", gen.infected_fraction)->capture_default_str();
  add_common(gen_cmd, false);

  VocabOptions voc;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Select the token vocabulary");
  vocab_cmd->add_option("--corpus", voc.corpus)->required();
  vocab_cmd->add_option("--out", voc.out)->required();
  vocab_cmd->add_option("--k-api", voc.k_api)->capture_default_str();
  vocab_cmd->add_option("--k-str", voc.k_str)->capture_default_str();
  vocab_cmd->add_option("--prefilter", voc.prefilter)->capture_default_str();
  add_common(vocab_cmd, false);

  TrainOptions tr;
  auto* train_sub = app.add_subcommand("train", "Train a classifier");
  train_sub->add_option("--corpus", tr.corpus, "Training corpus")->required();
  train_sub->add_option("--val", tr.val, "Validation corpus")->required();
  train_sub->add_option("--vocab", tr.vocab)->required();
  train_sub->add_option("--out", tr.out, "Model file")->required();
  train_sub->add_option("--report", tr.report, "Training report (default <out>.train.json)");
  train_sub->add_option("--nonneg-gcn", tr.nonneg_gcn)->capture_default_str();
  train_sub->add_option("--nonneg-gclf", tr.nonneg_gclf)->capture_default_str();
  train_sub->add_option("--adv-train", tr.adv_train, "Adversarial malware added before training");
  train_sub->add_option("--pool", tr.pool, "Benign pool for --adv-train");
  train_sub->add_option("--patience", tr.patience)->capture_default_str();
  train_sub->add_option("--epochs", tr.epochs)->capture_default_str();
  train_sub->add_option("--batch", tr.batch)->capture_default_str();
  train_sub->add_option("--lr", tr.lr)->capture_default_str();
  train_sub->add_option("--readout", tr.readout)->check(CLI::IsMember({"avg", "sum", "max"}))->capture_default_str();
  train_sub->add_option("--h1", tr.h1)->capture_default_str();
  train_sub->add_option("--h2", tr.h2)->capture_default_str();
  train_sub->add_option("--hg", tr.hg)->capture_default_str();
  train_sub->add_option("--projection", tr.projection)->capture_default_str();
  add_common(train_sub, true);  // --threads accepted, training stays single-threaded

  ModelInputs model_in;
  fs::path eval_out;
  auto* eval_sub = app.add_subcommand("eval", "Score a labeled corpus and write metrics");
  eval_sub->add_option("--model", model_in.model)->required();
  eval_sub->add_option("--vocab", model_in.vocab)->required();
  eval_sub->add_option("--corpus", model_in.corpus)->required();
  eval_sub->add_option("--out", eval_out, "Metrics JSON; ROC CSV goes to <out>.roc.csv")->required();
  add_common(eval_sub, true);

  AttackOptions att;
  fs::path attack_out;
  auto* attack_sub = app.add_subcommand("attack", "Run the additive attack sweep");
  attack_sub->add_option("--model", model_in.model)->required();
  attack_sub->add_option("--vocab", model_in.vocab)->required();
  attack_sub->add_option("--corpus", model_in.corpus)->required();
  attack_sub->add_option("--pool", att.pool)->required();
  attack_sub->add_option("--out", attack_out)->required();
  attack_sub->add_option("--overheads", att.overheads, "Comma-separated percentages");
  attack_sub->add_option("--modes", att.modes)->capture_default_str();
  attack_sub->add_option("--trials", att.trials)->capture_default_str();
  attack_sub->add_option("--target-fraction", att.target_fraction)->capture_default_str();
  attack_sub->add_option("--dead-tokens", att.dead_tokens)->capture_default_str();
  attack_sub->add_flag("--stop-at-first", att.stop_at_first, "Stop at the first evading overhead");
  add_common(attack_sub, true);

  std::size_t mono_trials = 1000;
  fs::path mono_out;
  auto* mono_sub = app.add_subcommand("check-monotone", "Audit monotonicity of a model");
  mono_sub->add_option("--model", model_in.model)->required();
  mono_sub->add_option("--vocab", model_in.vocab)->required();
  mono_sub->add_option("--corpus", model_in.corpus)->required();
  mono_sub->add_option("--trials", mono_trials)->capture_default_str();
  mono_sub->add_option("--out", mono_out, "Optional JSON report");
  add_common(mono_sub, false);

  fs::path inspect_corpus, inspect_vocab;
  std::string inspect_id;
  auto* inspect_sub = app.add_subcommand("inspect", "Print a graph and its feature footprint");
  inspect_sub->add_option("--corpus", inspect_corpus)->required();
  inspect_sub->add_option("--vocab", inspect_vocab);
  inspect_sub->add_option("--graph", inspect_id);
  add_common(inspect_sub, false);

  std::vector<std::string> argv_storage{"mal2gcn"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gen_cmd->parsed()) {
      gen_corpus(gen, common, out);
    } else if (vocab_cmd->parsed()) {
      build_vocab(voc, common, out, err);
    } else if (train_sub->parsed()) {
      train_cmd(tr, common, out, err);
    } else if (eval_sub->parsed()) {
      eval_cmd(model_in, eval_out, common, out, err);
    } else if (attack_sub->parsed()) {
      attack_cmd(model_in, att, attack_out, common, out, err);
    } else if (mono_sub->parsed()) {
      check_monotone_cmd(model_in, mono_trials, mono_out, common, out, err);
    } else if (inspect_sub->parsed()) {
      inspect_cmd(inspect_corpus, inspect_vocab, inspect_id, common, out, err);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const CheckFailure& e) {
    err << "check failed: " << e.what() << "\n";
    return kCheckFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace mal2gcn::cli
