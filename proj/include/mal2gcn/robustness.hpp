#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mal2gcn/fcg.hpp"
#include "mal2gcn/featurize.hpp"
#include "mal2gcn/gcn.hpp"

namespace mal2gcn {

// Benign-looking tokens an attacker injects.
struct BenignPool {
  std::vector<std::string> apis;
  std::vector<std::string> strings;
  // Optional sampling weights over apis followed by strings; uniform if empty.
  std::vector<double> weights;

  std::size_t size() const { return apis.size() + strings.size(); }
  bool operator==(const BenignPool&) const = default;
};

std::string serialize_pool(const BenignPool& pool);
BenignPool parse_pool(std::string_view text);
BenignPool read_pool(const std::filesystem::path& path);
void write_pool(const std::filesystem::path& path, const BenignPool& pool);

struct AttackModes {
  bool inject_existing = true;  // append tokens to existing functions
  bool add_dead_nodes = true;   // add never-called functions full of tokens

  bool any() const { return inject_existing || add_dead_nodes; }
  bool operator==(const AttackModes&) const = default;
};

AttackModes parse_modes(std::string_view csv);
std::string to_string(const AttackModes& modes);

struct AttackConfig {
  std::vector<double> overheads{0, 5, 10, 20, 30, 40, 50, 100, 150, 200, 400, 500};
  AttackModes modes;
  std::uint64_t seed = 0;
  std::size_t trials_per_sample = 1;
  // Share of existing nodes that receive injected tokens; 1.0 means all.
  double target_fraction = 0.5;
  std::size_t tokens_per_dead_node = 20;
  // Stop a sample's schedule at the first overhead that evades.
  bool stop_at_first_evasion = false;

  void validate() const;
};

struct TokenAdditions {
  std::vector<std::string> apis;
  std::vector<std::string> strings;

  bool operator==(const TokenAdditions&) const = default;
};

// Purely additive change to a graph.
struct Perturbation {
  std::map<std::string, TokenAdditions> token_additions;  // by node id
  std::vector<FunctionNode> new_nodes;
  std::vector<Edge> new_edges;  // caller (existing node) -> new node

  bool empty() const { return token_additions.empty() && new_nodes.empty(); }
  std::size_t injected_tokens() const;
  bool operator==(const Perturbation&) const = default;
};

// Throws DataError when the perturbation names an unknown node or attaches a
// new node from an unknown caller.
Fcg apply_perturbation(const Fcg& g, const Perturbation& p);

// Injects round(overhead_pct / 100 * g.total_tokens()) pool tokens. With a
// fixed seed, a larger budget extends the smaller one's perturbation.
Perturbation generate_attack(const Fcg& g, const BenignPool& pool, double overhead_pct,
                             const AttackModes& modes, std::uint64_t seed,
                             double target_fraction = 0.5,
                             std::size_t tokens_per_dead_node = 20);

inline constexpr double kDecisionThreshold = 0.5;

struct SampleOutcome {
  std::string graph_id;
  double original_score = 0.0;
  std::vector<double> adv_scores;  // per overhead; minimum over trials
  std::vector<bool> evaded;        // per overhead
};

struct CurvePoint {
  double overhead_pct = 0.0;
  double success_rate = 0.0;          // evasions / originally detected
  double robust_accuracy_all = 0.0;   // adversarial samples still detected / all samples
  double robust_accuracy_detected = 0.0;  // same, among originally detected
};

struct AttackReport {
  std::vector<double> overheads;
  std::vector<SampleOutcome> samples;
  std::vector<CurvePoint> curve;
  std::size_t originally_detected = 0;
  // Pooled over all overheads in the schedule.
  double robust_accuracy_all = 1.0;
  double robust_accuracy_detected = 1.0;

  std::size_t evasions_at(std::size_t overhead_index) const;
};

// Scores every sample at every overhead. Samples are processed on `threads`
// workers; results do not depend on the thread count.
AttackReport attack_sweep(const ModelParams& model, const Vocabulary& vocab, const Corpus& malware,
                          const BenignPool& pool, const AttackConfig& cfg,
                          std::size_t threads = 1);

struct ReportMeta {
  std::string tool_version;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // name -> sha256
};

std::string format_attack_report(const AttackReport& report, const ReportMeta& meta);

struct MonotonicityViolation {
  std::size_t trial = 0;
  std::string graph_id;
  double score_before = 0.0;
  double score_after = 0.0;
};

struct MonotonicityReport {
  bool informational = false;  // model is not fully non-negative; no claim made
  std::size_t trials = 0;
  std::vector<MonotonicityViolation> violations;
  double max_violation = 0.0;
  double min_input_gradient = 0.0;
  std::size_t gradient_violations = 0;  // graphs with an entry below -1e-12

  bool passed() const { return violations.empty() && gradient_violations == 0; }
};

inline constexpr double kMonotoneSlack = 1e-9;
inline constexpr double kGradientSlack = 1e-12;

// Random non-negative integer feature perturbations on existing nodes, plus an
// input-gradient sign audit of every graph touched.
MonotonicityReport check_monotonicity(const ModelParams& model, const Vocabulary& vocab,
                                      const Corpus& corpus, std::size_t trials,
                                      std::uint64_t seed);

std::string format_monotonicity_report(const MonotonicityReport& report, const ReportMeta& meta);

}  // namespace mal2gcn
