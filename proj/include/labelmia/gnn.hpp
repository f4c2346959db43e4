#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "labelmia/autograd.hpp"
#include "labelmia/graph.hpp"
#include "labelmia/optim.hpp"
#include "labelmia/oracle.hpp"

namespace lmia {

enum class GnnType { GCN, GAT, GraphSAGE, GIN };

std::string to_string(GnnType t);
GnnType gnn_type_from_string(const std::string& s);

enum class OverfitLevel { Low, High };

struct GnnConfig {
  GnnType gnn_type = GnnType::GCN;
  std::size_t num_layers = 2;
  std::size_t hidden_dim = 16;
  bool use_batchnorm = false;
  real_t dropout_rate = real_t(0);
  bool use_jumping_knowledge = false;
  std::size_t gat_heads = 1;
  real_t learning_rate = real_t(1e-2);
  real_t weight_decay = real_t(0);
  std::size_t epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The two training regimes. Low overfitting: 3 layers, 16 hidden units,
/// lr 6e-3, weight decay 0.5, 400 epochs, with batch normalization,
/// dropout 0.5 and jumping knowledge. High overfitting: 5 layers, 64 hidden
/// units, lr 1e-3, no weight decay, 200 epochs, none of the extras.
GnnConfig preset_config(OverfitLevel level, GnnType type);

/// Parameters plus architecture bookkeeping. Forward passes derive all
/// aggregation structure from the input graph, so a model applies to any
/// graph with the right feature dimension.
struct GnnModel {
  GnnConfig config;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<Tensor> params;
  std::vector<std::string> param_names;
  std::vector<BatchNormState> bn_states;  // one per non-final layer when enabled
};

GnnModel init_gnn_model(const GnnConfig& config, std::size_t input_dim,
                        std::size_t num_classes);

/// Node-feature view of a forward-pass input, either a whole graph or a
/// query payload.
struct LocalGraph {
  std::size_t n = 0;
  Tensor features;  // [n, d]
  std::vector<std::vector<std::uint32_t>> adj;

  static LocalGraph from_graph(const Graph& g);
  static LocalGraph from_query(const SubgraphQuery& q);
};

/// Appends the model's forward computation to the tape and returns the
/// logits node. In training mode batchnorm updates running statistics and
/// dropout draws from `dropout_rng` (required iff training with a positive
/// rate).
Tape::Id build_forward(Tape& tape, GnnModel& model, const LocalGraph& lg, bool training,
                       Rng* dropout_rng);

struct TrainedGnn {
  GnnModel model;
  std::string training_set_id;
  real_t train_accuracy = real_t(0);
  real_t test_accuracy = real_t(0);
};

/// Full-batch training on `train_graph` (every node is a training example),
/// evaluating accuracy on `eval_nodes` within `eval_graph` afterwards.
TrainedGnn train_gnn(const GnnConfig& config, const Graph& train_graph,
                     const Graph& eval_graph, const std::vector<std::uint32_t>& eval_nodes,
                     std::string training_set_id = {});

/// Inference-mode logits, [num_nodes x num_classes].
Tensor gnn_forward(const TrainedGnn& m, const Graph& g);
Tensor gnn_forward(const TrainedGnn& m, const SubgraphQuery& q);

/// Oracle adapters. The returned oracle references `m`; the model must
/// outlive it.
std::unique_ptr<LabelOracle> make_label_oracle(const TrainedGnn& m);
std::unique_ptr<PosteriorOracle> make_posterior_oracle(const TrainedGnn& m);

/// Checkpoint: a manifest (model.json) plus a little-endian 64-bit float
/// blob (params.bin) holding parameters and batchnorm running statistics.
/// Round-trips bitwise.
void save_checkpoint(const TrainedGnn& m, const std::filesystem::path& dir);
TrainedGnn load_checkpoint(const std::filesystem::path& dir);

}  // namespace lmia
