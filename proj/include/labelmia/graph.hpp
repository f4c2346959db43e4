#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "labelmia/common.hpp"

namespace lmia {

/// Undirected attributed graph in CSR form. Adjacency is symmetric, sorted
/// per row, deduplicated, and stores no self-loops.
struct Graph {
  std::size_t num_nodes = 0;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<real_t> features;        // row-major [num_nodes x feature_dim]
  std::vector<std::int32_t> labels;    // one label per node, in [0, num_classes)
  std::vector<std::size_t> row_ptr;    // size num_nodes + 1
  std::vector<std::uint32_t> col_idx;

  /// Build from a directed/undirected edge list. Edges are symmetrized and
  /// deduplicated; self-loops in the input are dropped.
  static Graph from_edge_list(std::size_t num_nodes, std::size_t num_classes,
                              std::size_t feature_dim, std::vector<real_t> features,
                              std::vector<std::int32_t> labels,
                              const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges);

  std::span<const std::uint32_t> neighbors(std::uint32_t v) const {
    return {col_idx.data() + row_ptr[v], col_idx.data() + row_ptr[v + 1]};
  }
  std::size_t degree(std::uint32_t v) const { return row_ptr[v + 1] - row_ptr[v]; }
  std::size_t num_undirected_edges() const { return col_idx.size() / 2; }
  const real_t* feature_row(std::uint32_t v) const {
    return features.data() + static_cast<std::size_t>(v) * feature_dim;
  }

  /// Invariant check; throws ArgumentError on violation.
  void validate() const;
};

/// Query payload sent to a model oracle: one center node with feature rows
/// for its (remaining) 1-hop neighborhood. Edges connect the center (local
/// index 0) to neighbors (local indices 1..n); the topology is always a star
/// and edges may be missing, which is how edge dropping is expressed.
struct SubgraphQuery {
  std::vector<real_t> center_features;
  std::vector<std::vector<real_t>> neighbor_features;
  /// (0, j) pairs with 1 <= j <= neighbor count.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;

  std::size_t node_count() const { return 1 + neighbor_features.size(); }
  std::size_t feature_dim() const { return center_features.size(); }

  void validate() const;
};

/// Nodes whose shortest-path distance from `node` is in [1, l], ascending.
/// The node itself is excluded.
std::vector<std::uint32_t> khop_neighbors(const Graph& g, std::uint32_t node, std::size_t l);

/// Star query around `node` with all its current 1-hop edges. When
/// `center_override` is given it replaces the center's feature row and must
/// have the graph's feature dimension.
SubgraphQuery build_1hop_query(const Graph& g, std::uint32_t node,
                               const std::vector<real_t>* center_override = nullptr);

struct InducedSubgraph {
  Graph graph;
  /// old_to_new[v] is the new index of v, or -1 if v was not kept.
  std::vector<std::int64_t> old_to_new;
  std::vector<std::uint32_t> new_to_old;
};

/// Induced subgraph on the given node set (deduplicated; ascending old-id
/// order defines the new indexing). Throws ArgumentError on an empty set or
/// out-of-range ids.
InducedSubgraph induced_subgraph(const Graph& g, const std::vector<std::uint32_t>& nodes);

}  // namespace lmia
