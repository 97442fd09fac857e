#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/random.hpp"
#include "shiftguard/sparse.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

using Mask = std::vector<bool>;

/// Undirected attributed graph with optional binary labels (1 = anomaly),
/// train/val/test splits and the unseen-normal flags.
struct Graph {
  SparseMatrix adjacency;
  Tensor features;
  std::optional<std::vector<int>> labels;
  Mask train;
  Mask val;
  Mask test;
  Mask unseen;

  std::size_t num_nodes() const { return features.rows(); }
  std::size_t feat_dim() const { return features.cols(); }
  std::size_t num_edges() const { return adjacency.nnz() / 2; }
  bool has_labels() const { return labels.has_value(); }

  const std::vector<int>& require_labels() const {
    if (!labels) throw ContractError("labels required");
    return *labels;
  }

  /// Throws ContractError naming the first violated invariant.
  void validate() const {
    const std::size_t n = num_nodes();
    require(adjacency.n() == n, "adjacency size does not match feature rows");
    for (const Mask* m : {&train, &val, &test, &unseen}) require(m->size() == n, "mask length != num_nodes");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = adjacency.row_ptr()[i]; p < adjacency.row_ptr()[i + 1]; ++p)
        require(adjacency.col_idx()[p] != i, "self-loop stored in adjacency");
    require(adjacency.is_symmetric(), "adjacency is not symmetric");
    require(features.all_finite(), "non-finite feature value");
    for (std::size_t i = 0; i < n; ++i) {
      const int splits = int(train[i]) + int(val[i]) + int(test[i]);
      require(splits <= 1, "masks overlap at node " + std::to_string(i));
      if (labels) require(splits == 1, "labeled node " + std::to_string(i) + " is in no split");
      require(!(unseen[i] && train[i]), "unseen node " + std::to_string(i) + " is in the train split");
    }
    if (labels) {
      require(labels->size() == n, "labels length != num_nodes");
      require_binary_labels(*labels);
      for (std::size_t i = 0; i < n; ++i)
        require(!(unseen[i] && (*labels)[i] != 0), "unseen node " + std::to_string(i) + " is labeled anomalous");
    }
  }

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Symmetric adjacency (unit weights) from an arc list. Every arc must appear
/// in both directions exactly once; self-loops are rejected.
inline SparseMatrix adjacency_from_arcs(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& arcs) {
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(arcs.size());
  for (auto [s, d] : arcs) {
    if (s >= n || d >= n) throw ContractError("edge endpoint out of range");
    if (s == d) throw ContractError("self-loop in edge list");
    entries.push_back({s, d, 1.0});
  }
  SparseMatrix a = SparseMatrix::from_entries(n, std::move(entries));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = a.row_ptr()[i] + 1; p < a.row_ptr()[i + 1]; ++p)
      if (a.col_idx()[p] == a.col_idx()[p - 1]) throw ContractError("duplicate edge in edge list");
  if (!a.is_symmetric()) throw ContractError("edge list is not symmetric");
  return a;
}

/// Symmetric adjacency from undirected pairs; each pair contributes both arcs.
inline SparseMatrix adjacency_from_edges(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  arcs.reserve(2 * edges.size());
  for (auto [u, v] : edges) {
    arcs.emplace_back(u, v);
    arcs.emplace_back(v, u);
  }
  return adjacency_from_arcs(n, arcs);
}

struct AggregationOperator {
  enum class Kind { kNormalizedAdjacency, kIdentity };
  Kind kind;
  SparseMatrix matrix;
};

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
inline AggregationOperator sym_normalize(const Graph& g) {
  const SparseMatrix& a = g.adjacency;
  const std::size_t n = a.n();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p) {
      require(a.col_idx()[p] != i, "sym_normalize: adjacency has a stored self-loop");
      d += a.values()[p];
    }
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  std::vector<std::size_t> ptr(n + 1, 0), col;
  std::vector<double> val;
  col.reserve(a.nnz() + n);
  val.reserve(a.nnz() + n);
  for (std::size_t i = 0; i < n; ++i) {
    bool self_done = false;
    const auto emit = [&](std::size_t j, double w) {
      col.push_back(j);
      val.push_back(w * inv_sqrt[i] * inv_sqrt[j]);
    };
    for (std::size_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p) {
      const std::size_t j = a.col_idx()[p];
      if (!self_done && j > i) {
        emit(i, 1.0);
        self_done = true;
      }
      emit(j, a.values()[p]);
    }
    if (!self_done) emit(i, 1.0);
    ptr[i + 1] = col.size();
  }
  return {AggregationOperator::Kind::kNormalizedAdjacency, SparseMatrix(n, std::move(ptr), std::move(col), std::move(val))};
}

inline AggregationOperator identity_operator(std::size_t n) {
  require(n >= 1, "identity_operator: n must be >= 1");
  return {AggregationOperator::Kind::kIdentity, SparseMatrix::identity(n)};
}

/// Share of node's 1-hop neighbors flagged unseen; 0 for isolated nodes.
inline double unseen_neighbor_fraction(const Graph& g, std::size_t node) {
  require(node < g.num_nodes(), "unseen_neighbor_fraction: node index out of range");
  const auto& a = g.adjacency;
  const std::size_t deg = a.row_nnz(node);
  if (deg == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t p = a.row_ptr()[node]; p < a.row_ptr()[node + 1]; ++p) hits += g.unseen[a.col_idx()[p]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(deg);
}

/// Subgraph on the nodes with keep[i] set, renumbered in ascending order.
/// Returns the graph and, for each new id, the original id.
inline std::pair<Graph, std::vector<std::size_t>> induced_subgraph(const Graph& g, const Mask& keep) {
  const std::size_t n = g.num_nodes();
  require(keep.size() == n, "induced_subgraph: mask length mismatch");
  std::vector<std::size_t> new_id(n, SIZE_MAX), old_id;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) {
      new_id[i] = old_id.size();
      old_id.push_back(i);
    }
  const std::size_t m = old_id.size();
  std::vector<std::size_t> ptr(m + 1, 0), col;
  std::vector<double> val;
  Graph out;
  out.features = Tensor(m, g.feat_dim());
  if (g.labels) out.labels = std::vector<int>(m);
  out.train.assign(m, false);
  out.val.assign(m, false);
  out.test.assign(m, false);
  out.unseen.assign(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = old_id[k];
    for (std::size_t p = g.adjacency.row_ptr()[i]; p < g.adjacency.row_ptr()[i + 1]; ++p) {
      const std::size_t j = g.adjacency.col_idx()[p];
      if (new_id[j] != SIZE_MAX) {
        col.push_back(new_id[j]);
        val.push_back(g.adjacency.values()[p]);
      }
    }
    ptr[k + 1] = col.size();
    std::copy_n(g.features.row(i).begin(), g.feat_dim(), out.features.row(k).begin());
    if (g.labels) (*out.labels)[k] = (*g.labels)[i];
    out.train[k] = g.train[i];
    out.val[k] = g.val[i];
    out.test[k] = g.test[i];
    out.unseen[k] = g.unseen[i];
  }
  out.adjacency = SparseMatrix(m, std::move(ptr), std::move(col), std::move(val));
  return {std::move(out), std::move(old_id)};
}

/// The pre-shift graph: unseen nodes and their incident edges removed.
inline Graph remove_unseen(const Graph& g) {
  Mask keep(g.num_nodes());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !g.unseen[i];
  return induced_subgraph(g, keep).first;
}

/// Stratified 40/20/40 split by label over the nodes with eligible[i] set.
inline void stratified_split(Graph& g, const Mask& eligible, Rng& rng) {
  const auto& labels = g.require_labels();
  const std::size_t n = g.num_nodes();
  g.train.assign(n, false);
  g.val.assign(n, false);
  g.test.assign(n, false);
  for (int lab : {0, 1}) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == lab && eligible[i]) ids.push_back(i);
    rng.shuffle(ids);
    const auto n_train = static_cast<std::size_t>(std::llround(0.4 * static_cast<double>(ids.size())));
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(ids.size())));
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (t < n_train) g.train[ids[t]] = true;
      else if (t < n_train + n_val) g.val[ids[t]] = true;
      else g.test[ids[t]] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!eligible[i]) g.test[i] = true;
}

}  // namespace shiftguard
