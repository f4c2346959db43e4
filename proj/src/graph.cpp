#include "labelmia/graph.hpp"

#include <algorithm>
#include <queue>
#include <string>

namespace lmia {

Graph Graph::from_edge_list(std::size_t num_nodes, std::size_t num_classes,
                            std::size_t feature_dim, std::vector<real_t> features,
                            std::vector<std::int32_t> labels,
                            const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  if (num_nodes == 0) throw ArgumentError("graph: empty node set");
  if (num_classes < 1) throw ArgumentError("graph: num_classes must be positive");
  if (features.size() != num_nodes * feature_dim)
    throw ArgumentError("graph: feature buffer size mismatch");
  if (labels.size() != num_nodes) throw ArgumentError("graph: label count mismatch");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw ArgumentError("graph: label out of range at node " + std::to_string(i));
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> sym;
  sym.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes)
      throw ArgumentError("graph: edge endpoint out of range (" + std::to_string(u) + ", " +
                          std::to_string(v) + ")");
    if (u == v) continue;
    sym.emplace_back(u, v);
    sym.emplace_back(v, u);
  }
  std::sort(sym.begin(), sym.end());
  sym.erase(std::unique(sym.begin(), sym.end()), sym.end());

  Graph g;
  g.num_nodes = num_nodes;
  g.num_classes = num_classes;
  g.feature_dim = feature_dim;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.row_ptr.assign(num_nodes + 1, 0);
  for (const auto& [u, v] : sym) g.row_ptr[u + 1]++;
  for (std::size_t i = 0; i < num_nodes; ++i) g.row_ptr[i + 1] += g.row_ptr[i];
  g.col_idx.reserve(sym.size());
  for (const auto& [u, v] : sym) g.col_idx.push_back(v);
  return g;
}

void Graph::validate() const {
  if (row_ptr.size() != num_nodes + 1) throw ArgumentError("graph: bad row_ptr size");
  if (row_ptr.front() != 0 || row_ptr.back() != col_idx.size())
    throw ArgumentError("graph: bad row_ptr bounds");
  if (features.size() != num_nodes * feature_dim)
    throw ArgumentError("graph: feature buffer size mismatch");
  if (labels.size() != num_nodes) throw ArgumentError("graph: label count mismatch");
  for (std::size_t v = 0; v < num_nodes; ++v) {
    if (labels[v] < 0 || static_cast<std::size_t>(labels[v]) >= num_classes)
      throw ArgumentError("graph: label out of range at node " + std::to_string(v));
    auto nb = neighbors(static_cast<std::uint32_t>(v));
    for (std::size_t k = 0; k < nb.size(); ++k) {
      if (nb[k] >= num_nodes) throw ArgumentError("graph: neighbor index out of range");
      if (nb[k] == v) throw ArgumentError("graph: self-loop stored");
      if (k > 0 && nb[k] <= nb[k - 1])
        throw ArgumentError("graph: adjacency row not strictly sorted");
      // symmetry
      auto back = neighbors(nb[k]);
      if (!std::binary_search(back.begin(), back.end(), static_cast<std::uint32_t>(v)))
        throw ArgumentError("graph: adjacency not symmetric");
    }
  }
}

void SubgraphQuery::validate() const {
  const std::size_t d = center_features.size();
  for (const auto& row : neighbor_features) {
    if (row.size() != d) throw ArgumentError("query: neighbor feature dimension mismatch");
  }
  const std::size_t n = node_count();
  std::vector<std::uint8_t> seen(n, 0);
  for (const auto& [a, b] : edges) {
    if (a != 0) throw ArgumentError("query: edges must start at the center");
    if (b == 0 || b >= n) throw ArgumentError("query: edge endpoint out of range");
    if (seen[b]) throw ArgumentError("query: duplicate edge");
    seen[b] = 1;
  }
}

std::vector<std::uint32_t> khop_neighbors(const Graph& g, std::uint32_t node, std::size_t l) {
  if (node >= g.num_nodes) throw ArgumentError("khop_neighbors: node out of range");
  std::vector<std::uint32_t> out;
  if (l == 0) return out;
  std::vector<std::uint8_t> seen(g.num_nodes, 0);
  seen[node] = 1;
  std::vector<std::uint32_t> frontier{node};
  for (std::size_t depth = 1; depth <= l && !frontier.empty(); ++depth) {
    std::vector<std::uint32_t> next;
    for (std::uint32_t u : frontier) {
      for (std::uint32_t w : g.neighbors(u)) {
        if (!seen[w]) {
          seen[w] = 1;
          next.push_back(w);
          out.push_back(w);
        }
      }
    }
    frontier = std::move(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SubgraphQuery build_1hop_query(const Graph& g, std::uint32_t node,
                               const std::vector<real_t>* center_override) {
  if (node >= g.num_nodes) throw ArgumentError("build_1hop_query: node out of range");
  if (center_override && center_override->size() != g.feature_dim)
    throw ArgumentError("build_1hop_query: override feature dimension mismatch");
  SubgraphQuery q;
  if (center_override)
    q.center_features = *center_override;
  else
    q.center_features.assign(g.feature_row(node), g.feature_row(node) + g.feature_dim);
  auto nb = g.neighbors(node);  // sorted ascending
  q.neighbor_features.reserve(nb.size());
  q.edges.reserve(nb.size());
  for (std::size_t k = 0; k < nb.size(); ++k) {
    q.neighbor_features.emplace_back(g.feature_row(nb[k]), g.feature_row(nb[k]) + g.feature_dim);
    q.edges.emplace_back(0u, static_cast<std::uint32_t>(k + 1));
  }
  return q;
}

InducedSubgraph induced_subgraph(const Graph& g, const std::vector<std::uint32_t>& nodes) {
  if (nodes.empty()) throw ArgumentError("induced_subgraph: empty node set");
  std::vector<std::uint32_t> kept = nodes;
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  if (kept.back() >= g.num_nodes) throw ArgumentError("induced_subgraph: node out of range");

  InducedSubgraph result;
  result.old_to_new.assign(g.num_nodes, -1);
  result.new_to_old = kept;
  for (std::size_t i = 0; i < kept.size(); ++i) result.old_to_new[kept[i]] = static_cast<std::int64_t>(i);

  const std::size_t n = kept.size(), d = g.feature_dim;
  Graph& sub = result.graph;
  sub.num_nodes = n;
  sub.num_classes = g.num_classes;
  sub.feature_dim = d;
  sub.features.resize(n * d);
  sub.labels.resize(n);
  sub.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t old = kept[i];
    std::copy(g.feature_row(old), g.feature_row(old) + d, sub.features.begin() + i * d);
    sub.labels[i] = g.labels[old];
    for (std::uint32_t w : g.neighbors(old)) {
      if (result.old_to_new[w] >= 0) {
        sub.col_idx.push_back(static_cast<std::uint32_t>(result.old_to_new[w]));
        sub.row_ptr[i + 1]++;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) sub.row_ptr[i + 1] += sub.row_ptr[i];
  return result;
}

}  // namespace lmia
