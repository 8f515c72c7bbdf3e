#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mal2gcn/fcg.hpp"
#include "mal2gcn/featurize.hpp"

namespace mal2gcn {

enum class Readout { kAvg, kSum, kMax };

std::string_view to_string(Readout readout);
Readout parse_readout(std::string_view text);

// Symmetrically normalized adjacency with self-connections:
// D^-1/2 (A_sym + I) D^-1/2, where A_sym ignores edge direction.
struct NormalizedAdjacency {
  Eigen::MatrixXd values;

  std::size_t n() const { return static_cast<std::size_t>(values.rows()); }
};

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows follow g.nodes order. `g` is expected to be normalized.
NormalizedAdjacency build_normalized_adjacency(const Fcg& g);
NormalizedAdjacency build_normalized_adjacency(
    std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges);

struct Dims {
  std::size_t d = 1000;
  std::size_t h1 = 500;
  std::size_t h2 = 250;
  std::size_t hg = 64;

  bool operator==(const Dims&) const = default;
};

// Two bias-free GCN layers, a readout, one hidden dense layer and a sigmoid
// output. When a non-negativity flag is set the matching weight matrices are
// kept >= 0; biases are never constrained.
struct ModelParams {
  Dims dims;
  RowMatrixXd w_gcn1;        // d x h1
  Eigen::MatrixXd w_gcn2;    // h1 x h2
  Eigen::MatrixXd w_hidden;  // h2 x hg
  Eigen::VectorXd b_hidden;  // hg
  Eigen::VectorXd w_out;     // hg
  double b_out = 0.0;
  bool nonneg_gcn = false;
  bool nonneg_gclf = false;
  Readout readout = Readout::kAvg;

  static ModelParams zeros(const Dims& dims);

  bool operator==(const ModelParams& other) const;

  // Number of scalar parameters.
  std::size_t size() const;
  // Flat views of every parameter block in a fixed order:
  // w_gcn1, w_gcn2, w_hidden, b_hidden, w_out, b_out.
  std::vector<Eigen::Map<Eigen::VectorXd>> blocks();
  std::vector<Eigen::Map<const Eigen::VectorXd>> blocks() const;
};

// Glorot-uniform weights, zero biases; projected immediately when a flag is on.
ModelParams init_params(const Dims& dims, bool nonneg_gcn, bool nonneg_gclf, Readout readout,
                        std::uint64_t seed);

// Arithmetic used inside the network. Model weights are always stored in
// double; kSingle casts them per call and runs the layers in float.
enum class Precision { kDouble, kSingle };

// Intermediate values of one forward pass over a batch of graphs. Node rows
// of all graphs are stacked; graph b owns rows [offsets[b], offsets[b+1]).
template <typename T>
struct BasicForwardCache {
  using Rows = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::vector<Eigen::Index> offsets;
  Rows h1;  // relu(adj * x * w_gcn1)
  Rows h2;  // relu(adj * h1 * w_gcn2)
  Rows pooled;                       // one row per graph
  std::vector<Eigen::Index> argmax;  // max readout only, graphs x h2
  Rows z_hidden;
  Rows hidden;
  Eigen::Matrix<T, Eigen::Dynamic, 1> z_out;
  Eigen::VectorXd p;
};
using ForwardCache = BasicForwardCache<double>;

// Malware probability of one graph. Throws DimensionError on shape mismatch.
double forward(const ModelParams& m, const NormalizedAdjacency& adj, const SparseFeatures& x,
               ForwardCache* cache = nullptr);

inline constexpr double kProbabilityClamp = 1e-7;

// A graph ready for the network: normalized adjacency plus BoW features.
struct GraphSample {
  std::string graph_id;
  NormalizedAdjacency adj;
  SparseFeatures x;
  double label = 0.0;  // 1 = malware
};

GraphSample make_sample(const Fcg& g, const Vocabulary& vocab);

// Scores of several graphs at once; same values as calling forward on each.
std::vector<double> forward_batch(const ModelParams& m,
                                  std::span<const GraphSample* const> batch,
                                  Precision precision = Precision::kDouble);

struct LossAndGradients {
  double loss = 0.0;
  ModelParams grads;
  std::size_t correct = 0;  // batch elements classified correctly at 0.5
};

// Mean binary cross-entropy over the batch and its exact gradient.
// Graphs whose probability lies outside the clamp window contribute nothing
// to the gradient and are left out of the backward pass.
LossAndGradients loss_and_gradients(const ModelParams& m,
                                    std::span<const GraphSample* const> batch,
                                    Precision precision = Precision::kDouble);

double binary_cross_entropy(double p, double label);

// d p / d x for every feature entry (n x d, dense).
Eigen::MatrixXd input_gradient(const ModelParams& m, const NormalizedAdjacency& adj,
                               const SparseFeatures& x);

// Zeroes negative entries of every weight matrix governed by an enabled flag.
ModelParams project_nonnegative(const ModelParams& m);
void project_nonnegative_in_place(ModelParams& m);

// Smallest weight entry among flag-governed matrices (+inf when none).
double min_governed_weight(const ModelParams& m);
bool governed_weights_nonnegative(const ModelParams& m);

// ---- model file ----

struct LoadedModel {
  ModelParams params;
  std::string vocab_digest;
};

std::string serialize_model(const ModelParams& m, std::string_view vocab_digest);
LoadedModel parse_model(std::string_view text);

void save_model(const std::filesystem::path& path, const ModelParams& m,
                const Vocabulary& vocab);
// Refuses a model trained against a different vocabulary.
ModelParams load_model(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace mal2gcn
