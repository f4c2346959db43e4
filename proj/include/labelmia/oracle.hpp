#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "labelmia/graph.hpp"

namespace lmia {

/// Hard-label prediction interface. This is the only model access the
/// label-only attack sees, and it only accepts star-shaped 1-hop queries, so
/// the threat model is enforced by the type. Every call to query() counts as
/// one query regardless of payload size.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;

  /// One label per node in the query, center first, then neighbors in
  /// payload order. Ties in the underlying scores resolve to the lowest
  /// class index.
  std::vector<std::int32_t> query(const SubgraphQuery& q) {
    q.validate();
    count_.fetch_add(1, std::memory_order_relaxed);
    return predict(q);
  }

  std::uint64_t query_count() const { return count_.load(std::memory_order_relaxed); }

 private:
  virtual std::vector<std::int32_t> predict(const SubgraphQuery& q) const = 0;
  std::atomic<std::uint64_t> count_{0};
};

/// Full-posterior prediction interface used by the probability baselines.
/// Unlike LabelOracle it can also answer over an arbitrary graph, which the
/// 2-hop and whole-graph baselines need.
class PosteriorOracle {
 public:
  virtual ~PosteriorOracle() = default;

  /// One probability vector (length num_classes, sums to 1) per query node.
  std::vector<std::vector<real_t>> query(const SubgraphQuery& q) {
    q.validate();
    count_.fetch_add(1, std::memory_order_relaxed);
    return predict(q);
  }

  /// Posterior rows for the requested nodes when the whole graph is fed.
  std::vector<std::vector<real_t>> query_graph(const Graph& g,
                                               const std::vector<std::uint32_t>& nodes) {
    count_.fetch_add(1, std::memory_order_relaxed);
    return predict_graph(g, nodes);
  }

  std::uint64_t query_count() const { return count_.load(std::memory_order_relaxed); }

 private:
  virtual std::vector<std::vector<real_t>> predict(const SubgraphQuery& q) const = 0;
  virtual std::vector<std::vector<real_t>> predict_graph(
      const Graph& g, const std::vector<std::uint32_t>& nodes) const = 0;
  std::atomic<std::uint64_t> count_{0};
};

}  // namespace lmia
