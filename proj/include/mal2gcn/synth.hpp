#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>

#include "mal2gcn/fcg.hpp"
#include "mal2gcn/robustness.hpp"

namespace mal2gcn {

struct PoolSizes {
  std::size_t benign_apis = 300;
  std::size_t benign_strings = 300;
  std::size_t malicious_apis = 300;
  std::size_t malicious_strings = 300;
  std::size_t shared_apis = 200;
  std::size_t shared_strings = 200;
};

struct SynthConfig {
  std::size_t n_benign = 1500;
  std::size_t n_malware = 1500;
  std::size_t min_nodes = 5;
  std::size_t max_nodes = 200;
  PoolSizes pools;
  double malicious_token_fraction = 0.6;
  double infected_node_fraction = 0.3;
  double extra_edge_density = 0.5;  // extra edges per node on top of the tree
  std::size_t min_tokens_per_node = 1;
  std::size_t max_tokens_per_node = 15;
  std::uint64_t seed = 42;

  void validate() const;
};

// Synthetic token names; all survive token normalization unchanged.
std::string synth_api_token(char group, std::size_t i);
std::string synth_string_token(char group, std::size_t i);

struct SynthOutput {
  Corpus corpus;
  BenignPool pool;  // benign + shared tokens
};

SynthOutput generate_corpus(const SynthConfig& cfg);

// Most frequent normalized tokens per kind among benign graphs; ties go to the
// lexicographically smaller token.
BenignPool derive_benign_pool(const Corpus& corpus, std::size_t top_k);

struct SplitSizes {
  std::size_t train = 2000;
  std::size_t val = 500;
  std::size_t test = 500;
};

struct CorpusSplits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Stratified deterministic split: each part gets half of its size from each
// label (the odd record goes to malware).
CorpusSplits split_corpus(const Corpus& corpus, const SplitSizes& sizes, std::uint64_t seed);

// JSON manifest recording the full generator config.
std::string synth_manifest(const SynthConfig& cfg, const SplitSizes* splits = nullptr);

}  // namespace mal2gcn
