#include "mal2gcn/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "mal2gcn/error.hpp"
#include "mal2gcn/text.hpp"
#include "single_step.hpp"

namespace mal2gcn {

std::string_view to_string(Readout readout) {
  switch (readout) {
    case Readout::kAvg: return "avg";
    case Readout::kSum: return "sum";
    case Readout::kMax: return "max";
  }
  return "avg";
}

Readout parse_readout(std::string_view text) {
  if (text == "avg") return Readout::kAvg;
  if (text == "sum") return Readout::kSum;
  if (text == "max") return Readout::kMax;
  throw DataError("unknown readout '" + std::string(text) + "'");
}

// --------------------------------------------------------------- adjacency

NormalizedAdjacency build_normalized_adjacency(
    std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  const auto size = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(size, size);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) throw DimensionError("edge endpoint out of range");
    if (u == v) continue;
    a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.0;
    a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1.0;
  }
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  NormalizedAdjacency adj;
  adj.values = inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
  return adj;
}

NormalizedAdjacency build_normalized_adjacency(const Fcg& g) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) index.emplace(g.nodes[i].id, i);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(g.edges.size());
  for (const auto& [caller, callee] : g.edges) {
    auto u = index.find(caller);
    auto v = index.find(callee);
    if (u == index.end() || v == index.end()) {
      throw DataError("graph " + g.graph_id + " has an edge to an unknown node");
    }
    edges.emplace_back(u->second, v->second);
  }
  return build_normalized_adjacency(g.nodes.size(), edges);
}

// ------------------------------------------------------------ ModelParams

ModelParams ModelParams::zeros(const Dims& dims) {
  ModelParams m;
  m.dims = dims;
  const auto d = static_cast<Eigen::Index>(dims.d), h1 = static_cast<Eigen::Index>(dims.h1),
             h2 = static_cast<Eigen::Index>(dims.h2), hg = static_cast<Eigen::Index>(dims.hg);
  m.w_gcn1 = RowMatrixXd::Zero(d, h1);
  m.w_gcn2 = Eigen::MatrixXd::Zero(h1, h2);
  m.w_hidden = Eigen::MatrixXd::Zero(h2, hg);
  m.b_hidden = Eigen::VectorXd::Zero(hg);
  m.w_out = Eigen::VectorXd::Zero(hg);
  return m;
}

bool ModelParams::operator==(const ModelParams& o) const {
  return dims == o.dims && nonneg_gcn == o.nonneg_gcn && nonneg_gclf == o.nonneg_gclf &&
         readout == o.readout && w_gcn1 == o.w_gcn1 && w_gcn2 == o.w_gcn2 &&
         w_hidden == o.w_hidden && b_hidden == o.b_hidden && w_out == o.w_out &&
         b_out == o.b_out;
}

std::vector<Eigen::Map<Eigen::VectorXd>> ModelParams::blocks() {
  std::vector<Eigen::Map<Eigen::VectorXd>> out;
  out.emplace_back(w_gcn1.data(), w_gcn1.size());
  out.emplace_back(w_gcn2.data(), w_gcn2.size());
  out.emplace_back(w_hidden.data(), w_hidden.size());
  out.emplace_back(b_hidden.data(), b_hidden.size());
  out.emplace_back(w_out.data(), w_out.size());
  out.emplace_back(&b_out, 1);
  return out;
}

std::vector<Eigen::Map<const Eigen::VectorXd>> ModelParams::blocks() const {
  std::vector<Eigen::Map<const Eigen::VectorXd>> out;
  out.emplace_back(w_gcn1.data(), w_gcn1.size());
  out.emplace_back(w_gcn2.data(), w_gcn2.size());
  out.emplace_back(w_hidden.data(), w_hidden.size());
  out.emplace_back(b_hidden.data(), b_hidden.size());
  out.emplace_back(w_out.data(), w_out.size());
  out.emplace_back(&b_out, 1);
  return out;
}

std::size_t ModelParams::size() const {
  std::size_t total = 0;
  for (const auto& block : blocks()) total += static_cast<std::size_t>(block.size());
  return total;
}

ModelParams init_params(const Dims& dims, bool nonneg_gcn, bool nonneg_gclf, Readout readout,
                        std::uint64_t seed) {
  if (dims.d == 0 || dims.h1 == 0 || dims.h2 == 0 || dims.hg == 0) {
    throw DimensionError("all layer sizes must be >= 1");
  }
  ModelParams m = ModelParams::zeros(dims);
  m.nonneg_gcn = nonneg_gcn;
  m.nonneg_gclf = nonneg_gclf;
  m.readout = readout;
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](auto& w, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  };
  glorot(m.w_gcn1, dims.d, dims.h1);
  glorot(m.w_gcn2, dims.h1, dims.h2);
  glorot(m.w_hidden, dims.h2, dims.hg);
  glorot(m.w_out, dims.hg, 1);
  project_nonnegative_in_place(m);
  return m;
}

// ----------------------------------------------------------------- forward

namespace {

template <typename T>
using Rows = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Cols = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using SparseRows = Eigen::SparseMatrix<T, Eigen::RowMajor>;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_shapes(const ModelParams& m, const NormalizedAdjacency& adj, const SparseFeatures& x) {
  if (static_cast<std::size_t>(x.cols()) != m.dims.d) {
    throw DimensionError("feature dimension " + std::to_string(x.cols()) +
                         " does not match model input " + std::to_string(m.dims.d));
  }
  if (adj.values.rows() != x.rows() || adj.values.cols() != x.rows()) {
    throw DimensionError("adjacency is " + std::to_string(adj.values.rows()) +
                         " nodes but features have " + std::to_string(x.rows()) + " rows");
  }
  if (x.rows() == 0) throw DimensionError("graph has no nodes");
}

// Weights in the working precision. Double views the model in place.
template <typename T>
struct Weights {
  const Rows<T>* w1;
  const Cols<T>* w2;
  const Cols<T>* wh;
  const Vec<T>* bh;
  const Vec<T>* wo;
  T bo;
  Readout readout;
};

Weights<double> weights_of(const ModelParams& m) {
  return {&m.w_gcn1, &m.w_gcn2, &m.w_hidden, &m.b_hidden, &m.w_out, m.b_out, m.readout};
}

struct FloatWeights {
  Rows<float> w1;
  Cols<float> w2;
  Cols<float> wh;
  Vec<float> bh;
  Vec<float> wo;

  explicit FloatWeights(const ModelParams& m)
      : w1(m.w_gcn1.cast<float>()),
        w2(m.w_gcn2.cast<float>()),
        wh(m.w_hidden.cast<float>()),
        bh(m.b_hidden.cast<float>()),
        wo(m.w_out.cast<float>()) {}

  Weights<float> view(const ModelParams& m) const {
    return {&w1, &w2, &wh, &bh, &wo, static_cast<float>(m.b_out), m.readout};
  }
};

template <typename T>
struct Grads {
  Rows<T> w1;
  Cols<T> w2;
  Cols<T> wh;
  Vec<T> bh;
  Vec<T> wo;
  double bo = 0.0;

  explicit Grads(const Dims& d)
      : w1(Rows<T>::Zero(static_cast<Eigen::Index>(d.d), static_cast<Eigen::Index>(d.h1))),
        w2(Cols<T>::Zero(static_cast<Eigen::Index>(d.h1), static_cast<Eigen::Index>(d.h2))),
        wh(Cols<T>::Zero(static_cast<Eigen::Index>(d.h2), static_cast<Eigen::Index>(d.hg))),
        bh(Vec<T>::Zero(static_cast<Eigen::Index>(d.hg))),
        wo(Vec<T>::Zero(static_cast<Eigen::Index>(d.hg))) {}

  void zero() {
    w1.setZero();
    w2.setZero();
    wh.setZero();
    bh.setZero();
    wo.setZero();
    bo = 0.0;
  }

  void export_to(ModelParams& g) const {
    g.w_gcn1 = w1.template cast<double>();
    g.w_gcn2 = w2.template cast<double>();
    g.w_hidden = wh.template cast<double>();
    g.b_hidden = bh.template cast<double>();
    g.w_out = wo.template cast<double>();
    g.b_out = bo;
  }
};

// out = a^T * b
template <typename T>
void sparse_transpose_times(const SparseRows<T>& a, const Rows<T>& b, Rows<T>& out) {
  out.setZero(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.outerSize(); ++i) {
    for (typename SparseRows<T>::InnerIterator it(a, i); it; ++it) {
      out.row(it.col()) += it.value() * b.row(i);
    }
  }
}

struct GraphRef {
  const NormalizedAdjacency* adj;
  const SparseFeatures* x;
};

// Graphs stacked into one block-diagonal problem so the dense layers run as a
// few large products.
template <typename T>
struct Stacked {
  std::vector<Eigen::Index> offsets{0};
  SparseRows<T> adj;
  SparseRows<T> x;

  std::size_t graphs() const { return offsets.size() - 1; }
};

// Copies rows [from, from + n) of `src` to the end of `dst`, shifting
// column indices by `shift`. `dst` must be in the middle of an insertBack run.
template <typename T, typename Src>
void append_rows(const Src& src, Eigen::Index from, Eigen::Index n, Eigen::Index to,
                 Eigen::Index shift, SparseRows<T>& dst) {
  for (Eigen::Index i = 0; i < n; ++i) {
    dst.startVec(to + i);
    for (typename Src::InnerIterator it(src, from + i); it; ++it) {
      dst.insertBack(to + i, it.col() + shift) = static_cast<T>(it.value());
    }
  }
}

template <typename T>
Stacked<T> stack(const ModelParams& m, std::span<const GraphRef> graphs) {
  Stacked<T> s;
  std::size_t x_nnz = 0;
  for (const auto& g : graphs) {
    check_shapes(m, *g.adj, *g.x);
    s.offsets.push_back(s.offsets.back() + g.x->rows());
    x_nnz += static_cast<std::size_t>(g.x->nonZeros());
  }
  const Eigen::Index total = s.offsets.back();
  // Column scan of the column-major dense blocks, converted to rows at the end.
  Eigen::SparseMatrix<T> adj_cols(total, total);
  adj_cols.reserve(4 * total);
  s.x.resize(total, static_cast<Eigen::Index>(m.dims.d));
  s.x.reserve(static_cast<Eigen::Index>(x_nnz));
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const Eigen::Index off = s.offsets[b];
    const auto& values = graphs[b].adj->values;
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      adj_cols.startVec(off + j);
      const double* col = values.col(j).data();
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        if (col[i] != 0.0) adj_cols.insertBack(off + i, off + j) = static_cast<T>(col[i]);
      }
    }
    append_rows(*graphs[b].x, 0, graphs[b].x->rows(), off, 0, s.x);
  }
  adj_cols.finalize();
  s.adj = adj_cols;
  s.x.finalize();
  return s;
}

// out = relu(adj * in) for rows [off, off + n) of one graph; `in` holds
// that graph's rows only.
template <typename T, typename In>
void propagate_block(const SparseRows<T>& adj, Eigen::Index off, Eigen::Index n, const In& in,
                     Rows<T>& out) {
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = out.row(off + i);
    row.setZero();
    for (typename SparseRows<T>::InnerIterator it(adj, off + i); it; ++it) {
      row += it.value() * in.row(it.col() - off);
    }
    row = row.cwiseMax(T(0));
  }
}

// h1 = relu(adj * x * w1), one graph at a time so the x * w1 rows stay in cache.
template <typename T>
void first_layer(const Stacked<T>& s, const Rows<T>& w1, Rows<T>& h1) {
  h1.resize(s.x.rows(), w1.cols());
  Rows<T> xw;
  for (std::size_t b = 0; b < s.graphs(); ++b) {
    const Eigen::Index off = s.offsets[b];
    const Eigen::Index n = s.offsets[b + 1] - off;
    xw.setZero(n, w1.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (typename SparseRows<T>::InnerIterator it(s.x, off + i); it; ++it) {
        xw.row(i) += it.value() * w1.row(it.col());
      }
    }
    propagate_block(s.adj, off, n, xw, h1);
  }
}

// h2 = relu(adj * in)
template <typename T>
void second_layer(const Stacked<T>& s, const Rows<T>& in, Rows<T>& h2) {
  h2.resize(in.rows(), in.cols());
  for (std::size_t b = 0; b < s.graphs(); ++b) {
    const Eigen::Index off = s.offsets[b];
    propagate_block(s.adj, off, s.offsets[b + 1] - off, in.middleRows(off, s.offsets[b + 1] - off),
                    h2);
  }
}

std::vector<GraphRef> refs(std::span<const GraphSample* const> batch) {
  std::vector<GraphRef> out;
  out.reserve(batch.size());
  for (const GraphSample* s : batch) out.push_back({&s->adj, &s->x});
  return out;
}

template <typename T>
void run_forward(const Weights<T>& w, const Stacked<T>& s, BasicForwardCache<T>& c) {
  const auto graphs = static_cast<Eigen::Index>(s.graphs());
  c.offsets = s.offsets;
  // relu(z) > 0 exactly when z > 0, so the activations double as masks.
  first_layer(s, *w.w1, c.h1);
  Rows<T> tmp(c.h1.rows(), w.w2->cols());
  tmp.noalias() = c.h1 * *w.w2;
  second_layer(s, tmp, c.h2);

  const Eigen::Index h2 = c.h2.cols();
  c.pooled.resize(graphs, h2);
  if (w.readout == Readout::kMax) c.argmax.assign(static_cast<std::size_t>(graphs * h2), 0);
  for (Eigen::Index b = 0; b < graphs; ++b) {
    const Eigen::Index off = s.offsets[static_cast<std::size_t>(b)];
    const Eigen::Index n = s.offsets[static_cast<std::size_t>(b) + 1] - off;
    const auto rows = c.h2.middleRows(off, n);
    switch (w.readout) {
      case Readout::kAvg:
        c.pooled.row(b) = rows.colwise().sum() / static_cast<T>(n);
        break;
      case Readout::kSum:
        c.pooled.row(b) = rows.colwise().sum();
        break;
      case Readout::kMax:
        for (Eigen::Index j = 0; j < h2; ++j) {
          Eigen::Index best = 0;
          c.pooled(b, j) = rows.col(j).maxCoeff(&best);
          c.argmax[static_cast<std::size_t>(b * h2 + j)] = off + best;
        }
        break;
    }
  }
  c.z_hidden.noalias() = c.pooled * *w.wh;
  c.z_hidden.rowwise() += w.bh->transpose();
  c.hidden = c.z_hidden.cwiseMax(T(0));
  c.z_out.noalias() = c.hidden * *w.wo;
  c.z_out.array() += w.bo;
  c.p.resize(graphs);
  for (Eigen::Index b = 0; b < graphs; ++b) c.p(b) = sigmoid(static_cast<double>(c.z_out(b)));
}

// Keeps only the listed graphs of a forward pass.
template <typename T>
void select_graphs(const std::vector<std::size_t>& keep, const Stacked<T>& s,
                   const BasicForwardCache<T>& c, Stacked<T>& s_out,
                   BasicForwardCache<T>& c_out) {
  s_out.offsets.assign(1, 0);
  for (auto b : keep) s_out.offsets.push_back(s_out.offsets.back() + s.offsets[b + 1] - s.offsets[b]);
  const Eigen::Index total = s_out.offsets.back();
  s_out.adj.resize(total, total);
  s_out.adj.reserve(s.adj.nonZeros());
  s_out.x.resize(total, s.x.cols());
  s_out.x.reserve(s.x.nonZeros());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const Eigen::Index from = s.offsets[keep[i]];
    const Eigen::Index n = s.offsets[keep[i] + 1] - from;
    const Eigen::Index to = s_out.offsets[i];
    append_rows(s.adj, from, n, to, to - from, s_out.adj);
    append_rows(s.x, from, n, to, 0, s_out.x);
  }
  s_out.adj.finalize();
  s_out.x.finalize();
  const auto k = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index h2 = c.h2.cols();
  c_out.offsets = s_out.offsets;
  c_out.h1.resize(total, c.h1.cols());
  c_out.h2.resize(total, h2);
  c_out.pooled.resize(k, h2);
  c_out.z_hidden.resize(k, c.z_hidden.cols());
  c_out.hidden.resize(k, c.hidden.cols());
  c_out.z_out.resize(k);
  c_out.p.resize(k);
  c_out.argmax.assign(c.argmax.empty() ? 0 : static_cast<std::size_t>(k * h2), 0);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto b = keep[static_cast<std::size_t>(i)];
    const Eigen::Index from = s.offsets[b];
    const Eigen::Index n = s.offsets[b + 1] - from;
    const Eigen::Index to = s_out.offsets[static_cast<std::size_t>(i)];
    c_out.h1.middleRows(to, n) = c.h1.middleRows(from, n);
    c_out.h2.middleRows(to, n) = c.h2.middleRows(from, n);
    const auto bi = static_cast<Eigen::Index>(b);
    c_out.pooled.row(i) = c.pooled.row(bi);
    c_out.z_hidden.row(i) = c.z_hidden.row(bi);
    c_out.hidden.row(i) = c.hidden.row(bi);
    c_out.z_out(i) = c.z_out(bi);
    c_out.p(i) = c.p(bi);
    if (!c.argmax.empty()) {
      for (Eigen::Index j = 0; j < h2; ++j) {
        c_out.argmax[static_cast<std::size_t>(i * h2 + j)] =
            c.argmax[static_cast<std::size_t>(bi * h2 + j)] - from + to;
      }
    }
  }
}

// Propagates d(output)/d(z_out) of every graph back through the network.
// Parameter gradients are accumulated into `grads` and the stacked feature
// gradient written to `dx`; either may be null.
template <typename T>
void backward(const Weights<T>& w, const BasicForwardCache<T>& c, const Stacked<T>& s,
              const Vec<T>& dz_out, Grads<T>* grads, Rows<T>* dx) {
  const auto graphs = static_cast<Eigen::Index>(s.graphs());
  Rows<T> dzh = dz_out * w.wo->transpose();
  dzh = (c.z_hidden.array() > T(0)).select(dzh, T(0));
  if (grads) {
    grads->bo += static_cast<double>(dz_out.sum());
    grads->wo.noalias() += c.hidden.transpose() * dz_out;
    grads->bh += dzh.colwise().sum().transpose();
    grads->wh.noalias() += c.pooled.transpose() * dzh;
  }
  Rows<T> dpooled(graphs, w.wh->rows());
  dpooled.noalias() = dzh * w.wh->transpose();

  const Eigen::Index h2 = c.h2.cols();
  Rows<T> dz2(c.h2.rows(), h2);
  if (w.readout == Readout::kMax) dz2.setZero();
  for (Eigen::Index b = 0; b < graphs; ++b) {
    const Eigen::Index off = s.offsets[static_cast<std::size_t>(b)];
    const Eigen::Index n = s.offsets[static_cast<std::size_t>(b) + 1] - off;
    switch (w.readout) {
      case Readout::kAvg:
        dz2.middleRows(off, n).rowwise() = dpooled.row(b) / static_cast<T>(n);
        break;
      case Readout::kSum:
        dz2.middleRows(off, n).rowwise() = dpooled.row(b);
        break;
      case Readout::kMax:
        for (Eigen::Index j = 0; j < h2; ++j) {
          dz2(c.argmax[static_cast<std::size_t>(b * h2 + j)], j) = dpooled(b, j);
        }
        break;
    }
  }
  dz2 = (c.h2.array() > T(0)).select(dz2, T(0));
  Rows<T> dp2;
  sparse_transpose_times(s.adj, dz2, dp2);
  if (grads) grads->w2.noalias() += c.h1.transpose() * dp2;
  Rows<T> dz1(dp2.rows(), w.w2->rows());
  dz1.noalias() = dp2 * w.w2->transpose();
  // Per graph: mask, adj^T, then scatter into the w1 rows of its features.
  Rows<T> dp1;
  if (dx) dp1.resize(dz1.rows(), dz1.cols());
  Rows<T> dp;
  for (Eigen::Index b = 0; b < graphs; ++b) {
    const Eigen::Index off = s.offsets[static_cast<std::size_t>(b)];
    const Eigen::Index n = s.offsets[static_cast<std::size_t>(b) + 1] - off;
    auto dz = dz1.middleRows(off, n);
    dz = (c.h1.middleRows(off, n).array() > T(0)).select(dz, T(0));
    dp.setZero(n, dz1.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (typename SparseRows<T>::InnerIterator it(s.adj, off + i); it; ++it) {
        dp.row(it.col() - off) += it.value() * dz.row(i);
      }
    }
    if (grads) {
      for (Eigen::Index i = 0; i < n; ++i) {
        for (typename SparseRows<T>::InnerIterator it(s.x, off + i); it; ++it) {
          grads->w1.row(it.col()) += it.value() * dp.row(i);
        }
      }
    }
    if (dx) dp1.middleRows(off, n) = dp;
  }
  if (dx) {
    dx->resize(dp1.rows(), w.w1->rows());
    dx->noalias() = dp1 * w.w1->transpose();
  }
}

template <typename T>
std::vector<double> scores(const Weights<T>& w, const ModelParams& m,
                           std::span<const GraphSample* const> batch) {
  // Bounded chunks keep the stacked activations small.
  constexpr std::size_t kChunk = 64;
  std::vector<double> out;
  out.reserve(batch.size());
  BasicForwardCache<T> c;
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    const auto part = batch.subspan(start, std::min(kChunk, batch.size() - start));
    run_forward(w, stack<T>(m, refs(part)), c);
    out.insert(out.end(), c.p.data(), c.p.data() + c.p.size());
  }
  return out;
}

// Adds the batch gradient to `grads` and returns loss and accuracy. The
// `grads` member of the result is left empty.
template <typename T>
LossAndGradients accumulate_gradients(const Weights<T>& w, const ModelParams& m,
                                      std::span<const GraphSample* const> batch,
                                      Grads<T>& grads) {
  LossAndGradients out;
  if (batch.empty()) return out;
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto graphs = refs(batch);
  Stacked<T> s = stack<T>(m, graphs);
  BasicForwardCache<T> cache;
  run_forward(w, s, cache);

  std::vector<std::size_t> active;
  std::vector<T> dz;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double p = cache.p(static_cast<Eigen::Index>(b));
    const double label = batch[b]->label;
    out.loss += binary_cross_entropy(p, label);
    out.correct += ((p >= 0.5) == (label >= 0.5)) ? 1 : 0;
    // Outside the clamp window the loss is flat in p.
    if (p >= kProbabilityClamp && p <= 1.0 - kProbabilityClamp) {
      active.push_back(b);
      dz.push_back(static_cast<T>((p - label) * scale));
    }
  }
  out.loss *= scale;
  if (active.empty()) return out;

  const Vec<T> dz_out = Eigen::Map<const Vec<T>>(dz.data(), static_cast<Eigen::Index>(dz.size()));
  if (active.size() == batch.size()) {
    backward<T>(w, cache, s, dz_out, &grads, nullptr);
  } else {
    Stacked<T> s_active;
    BasicForwardCache<T> c_active;
    select_graphs(active, s, cache, s_active, c_active);
    backward<T>(w, c_active, s_active, dz_out, &grads, nullptr);
  }
  return out;
}

template <typename T>
LossAndGradients loss_and_gradients_impl(const Weights<T>& w, const ModelParams& m,
                                         std::span<const GraphSample* const> batch) {
  Grads<T> grads(m.dims);
  LossAndGradients out = accumulate_gradients(w, m, batch, grads);
  out.grads.dims = m.dims;
  out.grads.readout = m.readout;
  grads.export_to(out.grads);
  return out;
}

}  // namespace

double forward(const ModelParams& m, const NormalizedAdjacency& adj, const SparseFeatures& x,
               ForwardCache* cache) {
  const GraphRef g{&adj, &x};
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  run_forward(weights_of(m), stack<double>(m, std::span(&g, 1)), c);
  return c.p(0);
}

std::vector<double> forward_batch(const ModelParams& m,
                                  std::span<const GraphSample* const> batch,
                                  Precision precision) {
  if (batch.empty()) return {};
  if (precision == Precision::kSingle) {
    const FloatWeights fw(m);
    return scores(fw.view(m), m, batch);
  }
  return scores(weights_of(m), m, batch);
}

GraphSample make_sample(const Fcg& g, const Vocabulary& vocab) {
  const Fcg normalized = normalize_fcg(g);
  GraphSample s;
  s.graph_id = g.graph_id;
  s.adj = build_normalized_adjacency(normalized);
  s.x = embed_graph(normalized, vocab).counts;
  s.label = g.label == Label::kMalware ? 1.0 : 0.0;
  return s;
}

double binary_cross_entropy(double p, double label) {
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc));
}

LossAndGradients loss_and_gradients(const ModelParams& m,
                                    std::span<const GraphSample* const> batch,
                                    Precision precision) {
  if (precision == Precision::kSingle) {
    const FloatWeights fw(m);
    return loss_and_gradients_impl(fw.view(m), m, batch);
  }
  return loss_and_gradients_impl(weights_of(m), m, batch);
}

struct SingleStep::Impl {
  FloatWeights weights;
  Grads<float> grads;

  explicit Impl(const ModelParams& m) : weights(m), grads(m.dims) {}
};

SingleStep::SingleStep(const ModelParams& m) : impl_(std::make_unique<Impl>(m)) {}
SingleStep::~SingleStep() = default;

void SingleStep::sync(const ModelParams& m) { impl_->weights = FloatWeights(m); }

SingleStep::Result SingleStep::run(const ModelParams& m,
                                   std::span<const GraphSample* const> batch) {
  impl_->grads.zero();
  const auto r = accumulate_gradients(impl_->weights.view(m), m, batch, impl_->grads);
  return {r.loss, r.correct};
}

std::array<std::span<float>, 5> SingleStep::weight_blocks() {
  auto& w = impl_->weights;
  return {std::span(w.w1.data(), static_cast<std::size_t>(w.w1.size())),
          std::span(w.w2.data(), static_cast<std::size_t>(w.w2.size())),
          std::span(w.wh.data(), static_cast<std::size_t>(w.wh.size())),
          std::span(w.bh.data(), static_cast<std::size_t>(w.bh.size())),
          std::span(w.wo.data(), static_cast<std::size_t>(w.wo.size()))};
}

std::array<std::span<const float>, 5> SingleStep::grad_blocks() const {
  const auto& g = impl_->grads;
  return {std::span(g.w1.data(), static_cast<std::size_t>(g.w1.size())),
          std::span(g.w2.data(), static_cast<std::size_t>(g.w2.size())),
          std::span(g.wh.data(), static_cast<std::size_t>(g.wh.size())),
          std::span(g.bh.data(), static_cast<std::size_t>(g.bh.size())),
          std::span(g.wo.data(), static_cast<std::size_t>(g.wo.size()))};
}

double SingleStep::grad_b_out() const { return impl_->grads.bo; }

Eigen::MatrixXd input_gradient(const ModelParams& m, const NormalizedAdjacency& adj,
                               const SparseFeatures& x) {
  const GraphRef g{&adj, &x};
  const auto w = weights_of(m);
  const auto s = stack<double>(m, std::span(&g, 1));
  ForwardCache cache;
  run_forward(w, s, cache);
  const double p = cache.p(0);
  RowMatrixXd dx;
  backward<double>(w, cache, s, Eigen::VectorXd::Constant(1, p * (1.0 - p)), nullptr, &dx);
  return dx;
}

// -------------------------------------------------------------- projection

void project_nonnegative_in_place(ModelParams& m) {
  if (m.nonneg_gcn) {
    m.w_gcn1 = m.w_gcn1.cwiseMax(0.0);
    m.w_gcn2 = m.w_gcn2.cwiseMax(0.0);
  }
  if (m.nonneg_gclf) {
    m.w_hidden = m.w_hidden.cwiseMax(0.0);
    m.w_out = m.w_out.cwiseMax(0.0);
  }
}

ModelParams project_nonnegative(const ModelParams& m) {
  ModelParams out = m;
  project_nonnegative_in_place(out);
  return out;
}

double min_governed_weight(const ModelParams& m) {
  double lowest = std::numeric_limits<double>::infinity();
  if (m.nonneg_gcn) {
    lowest = std::min({lowest, m.w_gcn1.minCoeff(), m.w_gcn2.minCoeff()});
  }
  if (m.nonneg_gclf) {
    lowest = std::min({lowest, m.w_hidden.minCoeff(), m.w_out.minCoeff()});
  }
  return lowest;
}

bool governed_weights_nonnegative(const ModelParams& m) { return min_governed_weight(m) >= 0.0; }

}  // namespace mal2gcn
