#include "mal2gcn/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "mal2gcn/digest.hpp"
#include "mal2gcn/error.hpp"
#include "mal2gcn/parallel.hpp"
#include "mal2gcn/text.hpp"

namespace mal2gcn {

// ------------------------------------------------------------------- pool

std::string serialize_pool(const BenignPool& pool) {
  std::string out = "#mal2gcn-pool v1 apis=" + std::to_string(pool.apis.size()) +
                    " strings=" + std::to_string(pool.strings.size()) + "\n";
  for (const auto& t : pool.apis) out += "api\t" + escape_field(t) + "\n";
  for (const auto& t : pool.strings) out += "string\t" + escape_field(t) + "\n";
  return out;
}

BenignPool parse_pool(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw DataError("pool file is empty");
  const auto header = parse_header(lines.front(), "#mal2gcn-pool", "v1");
  BenignPool pool;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto fields = split_fields(lines[i], '\t');
    const std::string where = "pool line " + std::to_string(i + 1);
    if (fields.size() != 2) throw DataError(where + ": expected kind<TAB>token");
    const auto kind = fields[0] == "api" ? TokenKind::kApi : TokenKind::kString;
    if (fields[0] != "api" && fields[0] != "string") {
      throw DataError(where + ": unknown kind '" + std::string(fields[0]) + "'");
    }
    auto token = unescape_field(fields[1]);
    auto normalized = normalize_token(token, kind);
    if (!normalized || *normalized != token) {
      throw DataError(where + ": token '" + token + "' is not normalized");
    }
    (kind == TokenKind::kApi ? pool.apis : pool.strings).push_back(std::move(token));
  }
  if (parse_size(header_value(header, "apis"), "apis") != pool.apis.size() ||
      parse_size(header_value(header, "strings"), "strings") != pool.strings.size()) {
    throw DataError("pool header counts do not match its rows");
  }
  return pool;
}

BenignPool read_pool(const std::filesystem::path& path) {
  try {
    return parse_pool(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_pool(const std::filesystem::path& path, const BenignPool& pool) {
  write_text_file(path, serialize_pool(pool));
}

// ------------------------------------------------------------------ modes

AttackModes parse_modes(std::string_view csv) {
  AttackModes modes{false, false};
  for (auto field : split_fields(csv, ',')) {
    if (field == "inject_existing") {
      modes.inject_existing = true;
    } else if (field == "add_dead_nodes") {
      modes.add_dead_nodes = true;
    } else {
      throw DataError("unknown attack mode '" + std::string(field) + "'");
    }
  }
  return modes;
}

std::string to_string(const AttackModes& modes) {
  std::string out;
  if (modes.inject_existing) out = "inject_existing";
  if (modes.add_dead_nodes) out += out.empty() ? "add_dead_nodes" : ",add_dead_nodes";
  return out;
}

void AttackConfig::validate() const {
  for (std::size_t i = 0; i < overheads.size(); ++i) {
    if (!(overheads[i] >= 0.0)) throw DataError("overheads must be non-negative");
    if (i > 0 && overheads[i] < overheads[i - 1]) {
      throw DataError("overheads must be ascending");
    }
  }
  if (!modes.any()) throw DataError("at least one attack mode is required");
  if (trials_per_sample == 0) throw DataError("trials_per_sample must be >= 1");
  if (!(target_fraction > 0.0 && target_fraction <= 1.0)) {
    throw DataError("target fraction must lie in (0, 1]");
  }
  if (tokens_per_dead_node == 0) throw DataError("tokens per dead node must be >= 1");
}

// ------------------------------------------------------------ perturbation

std::size_t Perturbation::injected_tokens() const {
  std::size_t total = 0;
  for (const auto& [_, add] : token_additions) total += add.apis.size() + add.strings.size();
  for (const auto& node : new_nodes) total += node.apis.size() + node.strings.size();
  return total;
}

Fcg apply_perturbation(const Fcg& g, const Perturbation& p) {
  Fcg out = g;
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) index.emplace(g.nodes[i].id, i);
  for (const auto& [id, add] : p.token_additions) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError("perturbation names unknown node id " + id);
    auto& node = out.nodes[it->second];
    node.apis.insert(node.apis.end(), add.apis.begin(), add.apis.end());
    node.strings.insert(node.strings.end(), add.strings.begin(), add.strings.end());
  }
  for (const auto& node : p.new_nodes) {
    if (index.contains(node.id)) throw DataError("new node id " + node.id + " already exists");
    out.nodes.push_back(node);
  }
  std::unordered_set<std::string_view> fresh;
  for (const auto& node : p.new_nodes) fresh.insert(node.id);
  for (const auto& edge : p.new_edges) {
    if (!index.contains(edge.first)) {
      throw DataError("perturbation attaches from unknown node id " + edge.first);
    }
    if (!fresh.contains(edge.second)) {
      throw DataError("perturbation edge targets " + edge.second + ", which is not a new node");
    }
    out.edges.push_back(edge);
  }
  return out;
}

namespace {

class TokenSampler {
 public:
  explicit TokenSampler(const BenignPool& pool) : pool_(pool) {
    if (!pool.weights.empty()) {
      if (pool.weights.size() != pool.size()) {
        throw DataError("pool weights must match the number of pool tokens");
      }
      weighted_ = std::discrete_distribution<std::size_t>(pool.weights.begin(), pool.weights.end());
    }
  }

  // Returns the kind and token text of one draw.
  std::pair<TokenKind, const std::string*> draw(std::mt19937_64& rng) {
    std::size_t i = 0;
    if (pool_.weights.empty()) {
      i = std::uniform_int_distribution<std::size_t>(0, pool_.size() - 1)(rng);
    } else {
      i = weighted_(rng);
    }
    if (i < pool_.apis.size()) return {TokenKind::kApi, &pool_.apis[i]};
    return {TokenKind::kString, &pool_.strings[i - pool_.apis.size()]};
  }

 private:
  const BenignPool& pool_;
  std::discrete_distribution<std::size_t> weighted_;
};

void push_token(TokenAdditions& add, std::pair<TokenKind, const std::string*> token) {
  (token.first == TokenKind::kApi ? add.apis : add.strings).push_back(*token.second);
}

std::string fresh_node_id(std::size_t k, const std::unordered_set<std::string_view>& taken) {
  std::string id = "adv_dead_" + std::to_string(k);
  while (taken.contains(id)) id += "_";
  return id;
}

}  // namespace

Perturbation generate_attack(const Fcg& g, const BenignPool& pool, double overhead_pct,
                             const AttackModes& modes, std::uint64_t seed,
                             double target_fraction, std::size_t tokens_per_dead_node) {
  if (!(overhead_pct >= 0.0)) throw DataError("overhead must be non-negative");
  if (!modes.any()) throw DataError("at least one attack mode is required");
  if (tokens_per_dead_node == 0) throw DataError("tokens per dead node must be >= 1");
  if (g.nodes.empty()) throw DataError("cannot attack an empty graph");

  Perturbation p;
  const auto budget = static_cast<std::size_t>(
      std::llround(overhead_pct / 100.0 * static_cast<double>(g.total_tokens())));
  if (budget == 0) return p;
  if (pool.size() == 0) throw DataError("benign pool is empty");

  std::size_t dead_budget = 0;
  if (modes.add_dead_nodes) dead_budget = modes.inject_existing ? budget / 2 : budget;
  const std::size_t existing_budget = budget - dead_budget;
  TokenSampler sampler(pool);

  if (existing_budget > 0) {
    // Target nodes are fixed before any token is drawn so that budgets nest.
    std::mt19937_64 rng(mix_seed(seed, 1));
    std::vector<std::size_t> order(g.nodes.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    }
    const auto wanted = static_cast<std::size_t>(
        std::llround(target_fraction * static_cast<double>(g.nodes.size())));
    order.resize(std::clamp<std::size_t>(wanted, 1, g.nodes.size()));
    for (std::size_t k = 0; k < existing_budget; ++k) {
      const auto node = order[std::uniform_int_distribution<std::size_t>(0, order.size() - 1)(rng)];
      push_token(p.token_additions[g.nodes[node].id], sampler.draw(rng));
    }
  }

  if (dead_budget > 0) {
    std::mt19937_64 rng(mix_seed(seed, 2));
    std::unordered_set<std::string_view> taken;
    for (const auto& node : g.nodes) taken.insert(node.id);
    std::vector<std::string> ids;
    const std::size_t count = (dead_budget + tokens_per_dead_node - 1) / tokens_per_dead_node;
    p.new_nodes.reserve(count);
    std::size_t remaining = dead_budget;
    for (std::size_t k = 0; k < count; ++k) {
      const auto caller = std::uniform_int_distribution<std::size_t>(0, g.nodes.size() - 1)(rng);
      FunctionNode node;
      node.id = fresh_node_id(k, taken);
      TokenAdditions tokens;
      const std::size_t here = std::min(remaining, tokens_per_dead_node);
      for (std::size_t t = 0; t < here; ++t) push_token(tokens, sampler.draw(rng));
      remaining -= here;
      node.apis = std::move(tokens.apis);
      node.strings = std::move(tokens.strings);
      p.new_edges.emplace_back(g.nodes[caller].id, node.id);
      p.new_nodes.push_back(std::move(node));
      taken.insert(p.new_nodes.back().id);
    }
  }
  return p;
}

// ------------------------------------------------------------------- sweep

std::size_t AttackReport::evasions_at(std::size_t overhead_index) const {
  std::size_t count = 0;
  for (const auto& s : samples) count += s.evaded.at(overhead_index) ? 1 : 0;
  return count;
}

AttackReport attack_sweep(const ModelParams& model, const Vocabulary& vocab, const Corpus& malware,
                          const BenignPool& pool, const AttackConfig& cfg, std::size_t threads) {
  cfg.validate();
  AttackReport report;
  report.overheads = cfg.overheads;
  report.samples.resize(malware.records.size());
  const std::size_t k = cfg.overheads.size();

  parallel_for(malware.records.size(), threads, [&](std::size_t i) {
    const Fcg g = normalize_fcg(malware.records[i]);
    SampleOutcome& out = report.samples[i];
    out.graph_id = g.graph_id;
    const GraphSample original = make_sample(g, vocab);
    out.original_score = forward(model, original.adj, original.x);
    out.adv_scores.assign(k, std::numeric_limits<double>::infinity());
    out.evaded.assign(k, false);
    const bool detected = out.original_score >= kDecisionThreshold;
    const std::uint64_t sample_seed = mix_seed(cfg.seed, fnv1a64(g.graph_id));

    for (std::size_t o = 0; o < k; ++o) {
      if (cfg.stop_at_first_evasion && o > 0 && out.evaded[o - 1]) {
        out.adv_scores[o] = out.adv_scores[o - 1];
        out.evaded[o] = true;
        continue;
      }
      for (std::size_t t = 0; t < cfg.trials_per_sample; ++t) {
        const auto pert = generate_attack(g, pool, cfg.overheads[o], cfg.modes,
                                          mix_seed(sample_seed, t), cfg.target_fraction,
                                          cfg.tokens_per_dead_node);
        double score = out.original_score;
        if (!pert.empty()) {
          const GraphSample adv = make_sample(apply_perturbation(g, pert), vocab);
          score = forward(model, adv.adj, adv.x);
        }
        out.adv_scores[o] = std::min(out.adv_scores[o], score);
      }
      out.evaded[o] = detected && out.adv_scores[o] < kDecisionThreshold;
    }
  });

  if (report.samples.empty()) return report;

  const double n = static_cast<double>(report.samples.size());
  for (const auto& s : report.samples) {
    report.originally_detected += s.original_score >= kDecisionThreshold ? 1 : 0;
  }
  const double detected = static_cast<double>(report.originally_detected);
  std::size_t pooled_all = 0, pooled_detected = 0;
  for (std::size_t o = 0; o < k; ++o) {
    std::size_t still_all = 0, still_detected = 0, evasions = 0;
    for (const auto& s : report.samples) {
      const bool flagged = s.adv_scores[o] >= kDecisionThreshold;
      still_all += flagged ? 1 : 0;
      still_detected += (flagged && s.original_score >= kDecisionThreshold) ? 1 : 0;
      evasions += s.evaded[o] ? 1 : 0;
    }
    pooled_all += still_all;
    pooled_detected += still_detected;
    CurvePoint point;
    point.overhead_pct = cfg.overheads[o];
    point.success_rate = detected > 0 ? static_cast<double>(evasions) / detected : 0.0;
    point.robust_accuracy_all = static_cast<double>(still_all) / n;
    point.robust_accuracy_detected =
        detected > 0 ? static_cast<double>(still_detected) / detected : 0.0;
    report.curve.push_back(point);
  }
  if (k > 0) {
    report.robust_accuracy_all = static_cast<double>(pooled_all) / (n * static_cast<double>(k));
    report.robust_accuracy_detected =
        detected > 0 ? static_cast<double>(pooled_detected) / (detected * static_cast<double>(k))
                     : 0.0;
  }
  return report;
}

namespace {

std::string meta_lines(std::string_view magic, const ReportMeta& meta, std::string_view extra) {
  std::string out = std::string(magic) + " v1 tool=" + meta.tool_version +
                    " seed=" + std::to_string(meta.seed);
  if (!extra.empty()) out += " " + std::string(extra);
  out += "\n";
  for (const auto& [name, digest] : meta.inputs) {
    out += "#input " + name + " sha256=" + digest + "\n";
  }
  return out;
}

}  // namespace

std::string format_attack_report(const AttackReport& report, const ReportMeta& meta) {
  std::string out = meta_lines("#mal2gcn-attack", meta, "");
  out += "graph_id,overhead_pct,original_score,adv_score,evaded\n";
  for (const auto& s : report.samples) {
    for (std::size_t o = 0; o < report.overheads.size(); ++o) {
      out += csv_field(s.graph_id) + "," + format_double(report.overheads[o]) + "," +
             format_double(s.original_score) + "," + format_double(s.adv_scores[o]) + "," +
             (s.evaded[o] ? "1" : "0") + "\n";
    }
  }
  out += "#summary\n";
  out += "overhead_pct,success_rate,robust_accuracy_all,robust_accuracy_detected\n";
  for (const auto& p : report.curve) {
    out += format_double(p.overhead_pct) + "," + format_double(p.success_rate) + "," +
           format_double(p.robust_accuracy_all) + "," + format_double(p.robust_accuracy_detected) +
           "\n";
  }
  out += "samples," + std::to_string(report.samples.size()) + "\n";
  out += "originally_detected," + std::to_string(report.originally_detected) + "\n";
  out += "robust_accuracy_all," + format_double(report.robust_accuracy_all) + "\n";
  out += "robust_accuracy_detected," + format_double(report.robust_accuracy_detected) + "\n";
  return out;
}

// ------------------------------------------------------------ monotonicity

MonotonicityReport check_monotonicity(const ModelParams& model, const Vocabulary& vocab,
                                      const Corpus& corpus, std::size_t trials,
                                      std::uint64_t seed) {
  MonotonicityReport report;
  report.trials = trials;
  report.informational =
      !(model.nonneg_gcn && model.nonneg_gclf && governed_weights_nonnegative(model));
  if (corpus.records.empty() || trials == 0) return report;

  std::mt19937_64 rng(seed);
  std::map<std::size_t, GraphSample> samples;
  std::set<std::size_t> audited;
  report.min_input_gradient = std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < trials; ++t) {
    const auto gi =
        std::uniform_int_distribution<std::size_t>(0, corpus.records.size() - 1)(rng);
    auto it = samples.find(gi);
    if (it == samples.end()) it = samples.emplace(gi, make_sample(corpus.records[gi], vocab)).first;
    const GraphSample& s = it->second;

    const auto rows = s.x.rows();
    const auto cols = s.x.cols();
    std::vector<Eigen::Triplet<double>> delta;
    const auto entries = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int e = 0; e < entries; ++e) {
      const auto r = std::uniform_int_distribution<Eigen::Index>(0, rows - 1)(rng);
      const auto c = std::uniform_int_distribution<Eigen::Index>(0, cols - 1)(rng);
      const auto v = std::uniform_int_distribution<int>(0, 5)(rng);
      delta.emplace_back(static_cast<int>(r), static_cast<int>(c), static_cast<double>(v));
    }
    SparseFeatures bump(rows, cols);
    bump.setFromTriplets(delta.begin(), delta.end());
    const SparseFeatures perturbed = s.x + bump;

    const double before = forward(model, s.adj, s.x);
    const double after = forward(model, s.adj, perturbed);
    if (after < before - kMonotoneSlack) {
      report.violations.push_back({t, s.graph_id, before, after});
      report.max_violation = std::max(report.max_violation, before - after);
    }

    if (audited.insert(gi).second) {
      const double lowest = input_gradient(model, s.adj, s.x).minCoeff();
      report.min_input_gradient = std::min(report.min_input_gradient, lowest);
      if (lowest < -kGradientSlack) ++report.gradient_violations;
    }
  }
  return report;
}

std::string format_monotonicity_report(const MonotonicityReport& report, const ReportMeta& meta) {
  nlohmann::ordered_json doc;
  doc["format"] = "mal2gcn-monotonicity v1";
  doc["tool_version"] = meta.tool_version;
  doc["seed"] = meta.seed;
  doc["inputs"] = meta.inputs;
  doc["informational"] = report.informational;
  doc["trials"] = report.trials;
  doc["violations"] = report.violations.size();
  doc["max_violation"] = report.max_violation;
  doc["min_input_gradient"] = report.min_input_gradient;
  doc["gradient_violations"] = report.gradient_violations;
  doc["passed"] = report.passed();
  auto list = nlohmann::ordered_json::array();
  for (const auto& v : report.violations) {
    list.push_back({{"trial", v.trial},
                    {"graph_id", v.graph_id},
                    {"score_before", v.score_before},
                    {"score_after", v.score_after}});
  }
  doc["violation_list"] = std::move(list);
  return doc.dump(2) + "\n";
}

}  // namespace mal2gcn
