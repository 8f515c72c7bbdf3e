#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mal2gcn/fcg.hpp"
#include "mal2gcn/gcn.hpp"

namespace testing_support {

inline mal2gcn::FunctionNode node(std::string id, std::vector<std::string> apis = {},
                                  std::vector<std::string> strings = {}) {
  return {std::move(id), std::move(apis), std::move(strings)};
}

inline mal2gcn::Fcg graph(std::vector<mal2gcn::FunctionNode> nodes,
                          std::vector<mal2gcn::Edge> edges = {}, std::string main = "main",
                          std::optional<mal2gcn::Label> label = mal2gcn::Label::kMalware,
                          std::string id = "g") {
  mal2gcn::Fcg g;
  g.graph_id = std::move(id);
  g.label = label;
  g.main_id = std::move(main);
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  return g;
}

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mal2gcn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random edge list over n nodes; no self-edges, duplicates possible.
inline std::vector<std::pair<std::size_t, std::size_t>> random_edges(std::size_t n,
                                                                      std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::bernoulli_distribution coin(0.4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && coin(rng)) edges.emplace_back(i, j);
    }
  }
  return edges;
}

inline mal2gcn::SparseFeatures random_features(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                               int max_count = 3) {
  std::uniform_int_distribution<int> count(0, max_count);
  mal2gcn::SparseFeatures x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const int c = count(rng);
      if (c > 0) trips.emplace_back(static_cast<int>(i), static_cast<int>(j), c);
    }
  }
  x.setFromTriplets(trips.begin(), trips.end());
  return x;
}

// Random model with weights uniform on [-1, 1] (or [0, 1] for governed blocks).
inline mal2gcn::ModelParams random_model(const mal2gcn::Dims& dims, bool nonneg_gcn,
                                         bool nonneg_gclf, mal2gcn::Readout readout,
                                         std::mt19937_64& rng) {
  auto m = mal2gcn::ModelParams::zeros(dims);
  m.nonneg_gcn = nonneg_gcn;
  m.nonneg_gclf = nonneg_gclf;
  m.readout = readout;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto block : m.blocks()) {
    for (Eigen::Index i = 0; i < block.size(); ++i) block[i] = u(rng);
  }
  mal2gcn::project_nonnegative_in_place(m);
  return m;
}

}  // namespace testing_support
