#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "labelmia/common.hpp"
#include "labelmia/tensor.hpp"

namespace lmia {

/// Sparse matrix in coordinate form with fixed (non-trainable) weights.
/// Used for neighborhood aggregation, where the matrix is a function of the
/// graph and never of the parameters.
struct SparseCoo {
  std::size_t rows = 0;
  std::size_t cols = 0;
  struct Entry {
    std::uint32_t r, c;
    real_t w;
  };
  std::vector<Entry> entries;
};

/// Per-destination aggregation sets for attention layers. sources[i] lists
/// the nodes node i attends over; a self-loop is included by construction so
/// every set is non-empty.
struct AttentionEdges {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::uint32_t>> sources;
};

/// Running statistics for batch normalization. The learnable scale/shift are
/// ordinary parameters and live outside this struct.
struct BatchNormState {
  std::vector<real_t> running_mean;
  std::vector<real_t> running_var;
  real_t momentum = real_t(0.1);
  real_t eps = real_t(1e-5);

  static BatchNormState init(std::size_t dim) {
    BatchNormState s;
    s.running_mean.assign(dim, real_t(0));
    s.running_var.assign(dim, real_t(1));
    return s;
  }
};

/// Reverse-mode differentiation tape. Operations append nodes, so node ids
/// are already in topological order and backward() is a single reverse sweep.
/// A tape describes one forward pass; training code builds a fresh tape per
/// step while parameters live outside and accumulate gradients across calls
/// to backward().
class Tape {
 public:
  using Id = std::int32_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant leaf. No gradient flows into it.
  Id input(Tensor t, std::string tag = {});

  /// Parameter leaf. After backward(), p.grad receives the accumulated
  /// gradient. The referenced tensor must outlive the tape.
  Id param(Tensor& p, std::string tag = {});

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  /// y[i,j] = x[i,j] + bias[j]
  Id add_rowvec(Id x, Id bias);
  Id scale(Id x, real_t k);
  Id relu(Id x);
  Id elu(Id x);
  Id concat_cols(const std::vector<Id>& parts);

  /// y = s * x with s fixed.
  Id spmm(SparseCoo s, Id x);

  /// Attention aggregation: for every node i, scores over its aggregation
  /// set are leaky_relu(center_score_i + neigh_score_j), normalized with a
  /// softmax, and the output row is the weighted sum of h rows.
  /// center/neigh scores are h * att_center and h * att_neighbor.
  Id gat_attention(std::shared_ptr<const AttentionEdges> edges, Id h, Id att_center,
                   Id att_neighbor, real_t leaky_slope);

  /// Batch normalization over rows. Training mode normalizes with batch
  /// statistics (at least two rows required) and updates the running state;
  /// inference mode uses the running state and touches nothing.
  Id batchnorm(Id x, Id gamma, Id beta, BatchNormState& state, bool training);

  /// Inverted dropout. Identity when not training or rate is zero.
  Id dropout(Id x, real_t rate, bool training, Rng& rng);

  /// Row-wise softmax.
  Id softmax(Id logits);

  /// Mean softmax cross-entropy over rows; labels[i] is the class of row i.
  Id softmax_cross_entropy(Id logits, std::vector<std::int32_t> labels);

  /// Mean binary cross-entropy on logits (numerically stable form).
  /// logits is [n] or [n,1]; targets are 0/1.
  Id bce_with_logits(Id logits, std::vector<real_t> targets);

  Id mean_squared_error(Id x, Tensor target);

  const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  real_t scalar_value(Id id) const;

  /// Reverse sweep from a scalar loss. Throws NumericError if the loss is
  /// non-finite, naming the first node that produced a non-finite value.
  void backward(Id loss);

  /// Gradient of the given node, valid after backward().
  const std::vector<real_t>& grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].grad_;
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    std::vector<real_t> grad_;
    std::function<void(Tape&)> back;
    Tensor* external = nullptr;
    std::string tag;
  };

  Id push(Tensor val, std::string tag);
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void check_id(Id id) const;

  std::vector<Node> nodes_;
};

/// Row-wise softmax outside the tape, for inference paths.
void softmax_rows_inplace(Tensor& logits);

/// Index of the row maximum; ties resolve to the lowest index.
std::size_t argmax_row(const real_t* row, std::size_t n);

}  // namespace lmia
