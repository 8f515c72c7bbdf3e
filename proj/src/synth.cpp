#include "mal2gcn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "json.hpp"
#include "mal2gcn/error.hpp"

namespace mal2gcn {

namespace {

bool in_unit_interval(double v) { return v > 0.0 && v <= 1.0; }

template <typename T>
void shuffle_in_place(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  }
}

std::string padded(std::string_view prefix, char group, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%c_%03zu", group, i);
  return std::string(prefix) + buf;
}

// Flat token list; index < apis.size() means API.
struct TokenSet {
  std::vector<std::string> apis;
  std::vector<std::string> strings;

  std::size_t size() const { return apis.size() + strings.size(); }

  void draw_into(FunctionNode& node, std::mt19937_64& rng) const {
    const auto i = std::uniform_int_distribution<std::size_t>(0, size() - 1)(rng);
    if (i < apis.size()) {
      node.apis.push_back(apis[i]);
    } else {
      node.strings.push_back(strings[i - apis.size()]);
    }
  }
};

TokenSet make_tokens(char group, std::size_t n_apis, std::size_t n_strings) {
  TokenSet set;
  for (std::size_t i = 0; i < n_apis; ++i) set.apis.push_back(synth_api_token(group, i));
  for (std::size_t i = 0; i < n_strings; ++i) set.strings.push_back(synth_string_token(group, i));
  return set;
}

}  // namespace

std::string synth_api_token(char group, std::size_t i) { return padded("api", group, i); }
std::string synth_string_token(char group, std::size_t i) { return padded("str", group, i); }

void SynthConfig::validate() const {
  if (min_nodes < 1 || max_nodes < min_nodes) throw DataError("need 1 <= min_nodes <= max_nodes");
  if (!in_unit_interval(malicious_token_fraction) || !in_unit_interval(infected_node_fraction)) {
    throw DataError("fractions must lie in (0, 1]");
  }
  if (!(extra_edge_density >= 0.0)) throw DataError("edge density must be >= 0");
  if (min_tokens_per_node > max_tokens_per_node) {
    throw DataError("need min_tokens_per_node <= max_tokens_per_node");
  }
  if (pools.benign_apis + pools.benign_strings + pools.shared_apis + pools.shared_strings == 0) {
    throw DataError("benign and shared pools are empty");
  }
  if (n_malware > 0 && pools.malicious_apis + pools.malicious_strings == 0) {
    throw DataError("malicious pool is empty");
  }
}

SynthOutput generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);

  const TokenSet malicious = make_tokens('m', cfg.pools.malicious_apis, cfg.pools.malicious_strings);
  TokenSet background = make_tokens('b', cfg.pools.benign_apis, cfg.pools.benign_strings);
  {
    const TokenSet shared = make_tokens('s', cfg.pools.shared_apis, cfg.pools.shared_strings);
    background.apis.insert(background.apis.end(), shared.apis.begin(), shared.apis.end());
    background.strings.insert(background.strings.end(), shared.strings.begin(),
                              shared.strings.end());
  }

  std::vector<Label> labels(cfg.n_benign, Label::kBenign);
  labels.insert(labels.end(), cfg.n_malware, Label::kMalware);
  shuffle_in_place(labels, rng);

  SynthOutput out;
  out.corpus.records.reserve(labels.size());
  const double log_lo = std::log(static_cast<double>(cfg.min_nodes));
  const double log_hi = std::log(static_cast<double>(cfg.max_nodes) + 1.0);

  for (std::size_t k = 0; k < labels.size(); ++k) {
    Fcg g;
    char id[32];
    std::snprintf(id, sizeof(id), "g%06zu", k);
    g.graph_id = id;
    g.label = labels[k];
    g.main_id = "main";

    // Log-uniform node count: many small graphs, a long tail of large ones.
    const double draw = std::exp(std::uniform_real_distribution<double>(log_lo, log_hi)(rng));
    const auto n = std::clamp(static_cast<std::size_t>(draw), cfg.min_nodes, cfg.max_nodes);
    g.nodes.resize(n);
    g.nodes[0].id = "main";
    for (std::size_t i = 1; i < n; ++i) g.nodes[i].id = "f" + std::to_string(i);

    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 1; i < n; ++i) {
      const auto parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      edges.emplace(parent, i);
      g.edges.emplace_back(g.nodes[parent].id, g.nodes[i].id);
    }
    if (n > 1) {
      const auto extra =
          static_cast<std::size_t>(std::llround(cfg.extra_edge_density * static_cast<double>(n)));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t added = 0, tries = 0; added < extra && tries < 10 * extra + 10; ++tries) {
        const auto u = pick(rng);
        const auto v = pick(rng);
        if (u == v || !edges.emplace(u, v).second) continue;
        g.edges.emplace_back(g.nodes[u].id, g.nodes[v].id);
        ++added;
      }
    }

    std::vector<bool> infected(n, false);
    if (labels[k] == Label::kMalware) {
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      shuffle_in_place(order, rng);
      const auto count = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(cfg.infected_node_fraction * static_cast<double>(n))),
          1, n);
      for (std::size_t i = 0; i < count; ++i) infected[order[i]] = true;
    }

    std::uniform_int_distribution<std::size_t> token_count(cfg.min_tokens_per_node,
                                                           cfg.max_tokens_per_node);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto tokens = token_count(rng);
      for (std::size_t t = 0; t < tokens; ++t) {
        if (infected[i] && unit(rng) < cfg.malicious_token_fraction) {
          malicious.draw_into(g.nodes[i], rng);
        } else {
          background.draw_into(g.nodes[i], rng);
        }
      }
    }
    out.corpus.records.push_back(std::move(g));
  }

  out.corpus.provenance = {{"source", "synth"},
                           {"seed", std::to_string(cfg.seed)},
                           {"generator", "mal2gcn-synth v1"}};
  out.pool.apis = std::move(background.apis);
  out.pool.strings = std::move(background.strings);
  return out;
}

BenignPool derive_benign_pool(const Corpus& corpus, std::size_t top_k) {
  std::map<std::string, std::size_t> apis, strings;
  bool any_benign = false;
  for (const auto& g : corpus.records) {
    if (g.label != Label::kBenign) continue;
    any_benign = true;
    for (const auto& node : g.nodes) {
      for (const auto& raw : node.apis) ++apis[*normalize_token(raw, TokenKind::kApi)];
      for (const auto& raw : node.strings) {
        if (auto token = normalize_token(raw, TokenKind::kString)) ++strings[*token];
      }
    }
  }
  if (!any_benign) throw DataError("corpus has no benign graphs to derive a pool from");

  auto top = [top_k](const std::map<std::string, std::size_t>& counts) {
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > top_k) ranked.resize(top_k);
    std::vector<std::string> tokens;
    for (auto& [token, _] : ranked) tokens.push_back(std::move(token));
    return tokens;
  };
  BenignPool pool;
  pool.apis = top(apis);
  pool.strings = top(strings);
  return pool;
}

CorpusSplits split_corpus(const Corpus& corpus, const SplitSizes& sizes, std::uint64_t seed) {
  std::vector<std::size_t> benign, malware;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& label = corpus.records[i].label;
    if (!label) throw DataError("cannot split unlabeled graph " + corpus.records[i].graph_id);
    (*label == Label::kBenign ? benign : malware).push_back(i);
  }
  const auto benign_share = [](std::size_t size) { return size / 2; };
  const std::size_t need_benign =
      benign_share(sizes.train) + benign_share(sizes.val) + benign_share(sizes.test);
  const std::size_t need_malware = sizes.train + sizes.val + sizes.test - need_benign;
  if (benign.size() < need_benign || malware.size() < need_malware) {
    throw DataError("corpus too small for the requested split");
  }
  std::mt19937_64 rng(seed);
  shuffle_in_place(benign, rng);
  shuffle_in_place(malware, rng);

  std::size_t next_benign = 0, next_malware = 0;
  auto take = [&](std::size_t size) {
    Corpus part;
    part.provenance = corpus.provenance;
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < benign_share(size); ++i) picked.push_back(benign[next_benign++]);
    for (std::size_t i = benign_share(size); i < size; ++i) {
      picked.push_back(malware[next_malware++]);
    }
    shuffle_in_place(picked, rng);
    for (auto i : picked) part.records.push_back(corpus.records[i]);
    return part;
  };
  CorpusSplits splits;
  splits.train = take(sizes.train);
  splits.val = take(sizes.val);
  splits.test = take(sizes.test);
  return splits;
}

std::string synth_manifest(const SynthConfig& cfg, const SplitSizes* splits) {
  nlohmann::ordered_json doc;
  doc["format"] = "mal2gcn-synth-manifest v1";
  doc["generator"] = "mal2gcn-synth v1";
  doc["seed"] = cfg.seed;
  doc["n_benign"] = cfg.n_benign;
  doc["n_malware"] = cfg.n_malware;
  doc["node_count_range"] = {cfg.min_nodes, cfg.max_nodes};
  doc["pools"] = {{"benign_apis", cfg.pools.benign_apis},
                  {"benign_strings", cfg.pools.benign_strings},
                  {"malicious_apis", cfg.pools.malicious_apis},
                  {"malicious_strings", cfg.pools.malicious_strings},
                  {"shared_apis", cfg.pools.shared_apis},
                  {"shared_strings", cfg.pools.shared_strings}};
  doc["malicious_token_fraction"] = cfg.malicious_token_fraction;
  doc["infected_node_fraction"] = cfg.infected_node_fraction;
  doc["extra_edge_density"] = cfg.extra_edge_density;
  doc["tokens_per_node"] = {cfg.min_tokens_per_node, cfg.max_tokens_per_node};
  if (splits) doc["splits"] = {{"train", splits->train}, {"val", splits->val}, {"test", splits->test}};
  return doc.dump(2) + "\n";
}

}  // namespace mal2gcn
