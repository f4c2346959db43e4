#include "labelmia/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "labelmia/json_util.hpp"

namespace lmia {

namespace {

constexpr real_t kLeakySlope = real_t(0.2);

// Layer width bookkeeping shared by init and forward.
struct LayerDims {
  std::vector<std::size_t> in;        // input width per layer
  std::vector<std::size_t> out;       // output width per layer
  std::vector<std::size_t> per_head;  // per-head output width (GAT)
};

LayerDims layer_dims(const GnnConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  const std::size_t L = cfg.num_layers;
  LayerDims d;
  d.in.resize(L);
  d.out.resize(L);
  d.per_head.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const bool final_layer = (l + 1 == L);
    d.in[l] = (l == 0) ? input_dim : d.out[l - 1];
    d.per_head[l] = final_layer ? num_classes : cfg.hidden_dim;
    if (cfg.gnn_type == GnnType::GAT && !final_layer)
      d.out[l] = d.per_head[l] * cfg.gat_heads;
    else
      d.out[l] = final_layer ? num_classes : cfg.hidden_dim;
  }
  if (cfg.use_jumping_knowledge && L >= 2) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < L; ++l) total += d.out[l];
    d.in[L - 1] = total;
  }
  return d;
}

Tensor glorot_vec(std::size_t dim, Rng& rng) {
  Tensor t = glorot_uniform(dim, 1, rng);
  t.shape = {dim};
  return t;
}

std::size_t param_index(const GnnModel& m, const std::string& name) {
  for (std::size_t i = 0; i < m.param_names.size(); ++i)
    if (m.param_names[i] == name) return i;
  throw ArgumentError("gnn: missing parameter '" + name + "'");
}

SparseCoo gcn_norm_coo(const LocalGraph& lg) {
  SparseCoo s;
  s.rows = s.cols = lg.n;
  std::vector<real_t> inv_sqrt(lg.n);
  for (std::size_t i = 0; i < lg.n; ++i)
    inv_sqrt[i] = real_t(1) / std::sqrt(static_cast<real_t>(1 + lg.adj[i].size()));
  for (std::size_t i = 0; i < lg.n; ++i) {
    const std::uint32_t ui = static_cast<std::uint32_t>(i);
    s.entries.push_back({ui, ui, inv_sqrt[i] * inv_sqrt[i]});
    for (std::uint32_t j : lg.adj[i]) s.entries.push_back({ui, j, inv_sqrt[i] * inv_sqrt[j]});
  }
  return s;
}

SparseCoo mean_coo(const LocalGraph& lg) {
  SparseCoo s;
  s.rows = s.cols = lg.n;
  for (std::size_t i = 0; i < lg.n; ++i) {
    if (lg.adj[i].empty()) continue;  // isolated rows aggregate to zero
    const real_t w = real_t(1) / static_cast<real_t>(lg.adj[i].size());
    for (std::uint32_t j : lg.adj[i])
      s.entries.push_back({static_cast<std::uint32_t>(i), j, w});
  }
  return s;
}

SparseCoo sum_self_coo(const LocalGraph& lg) {
  // (1 + eps) * self + neighbor sum, with eps fixed at 0
  SparseCoo s;
  s.rows = s.cols = lg.n;
  for (std::size_t i = 0; i < lg.n; ++i) {
    const std::uint32_t ui = static_cast<std::uint32_t>(i);
    s.entries.push_back({ui, ui, real_t(1)});
    for (std::uint32_t j : lg.adj[i]) s.entries.push_back({ui, j, real_t(1)});
  }
  return s;
}

std::shared_ptr<AttentionEdges> attention_sets(const LocalGraph& lg) {
  auto e = std::make_shared<AttentionEdges>();
  e->num_nodes = lg.n;
  e->sources.resize(lg.n);
  for (std::size_t i = 0; i < lg.n; ++i) {
    e->sources[i].reserve(1 + lg.adj[i].size());
    e->sources[i].push_back(static_cast<std::uint32_t>(i));  // self-loop first
    for (std::uint32_t j : lg.adj[i]) e->sources[i].push_back(j);
  }
  return e;
}

real_t accuracy_on(const TrainedGnn& m, const Graph& g, const std::vector<std::uint32_t>& nodes) {
  if (nodes.empty()) return real_t(0);
  Tensor logits = gnn_forward(m, g);
  const std::size_t c = logits.cols();
  std::size_t hits = 0;
  for (std::uint32_t v : nodes) {
    std::size_t pred = argmax_row(&logits.values[static_cast<std::size_t>(v) * c], c);
    if (static_cast<std::int32_t>(pred) == g.labels[v]) ++hits;
  }
  return static_cast<real_t>(hits) / static_cast<real_t>(nodes.size());
}

}  // namespace

std::string to_string(GnnType t) {
  switch (t) {
    case GnnType::GCN: return "GCN";
    case GnnType::GAT: return "GAT";
    case GnnType::GraphSAGE: return "GraphSAGE";
    case GnnType::GIN: return "GIN";
  }
  throw ArgumentError("unknown gnn type");
}

GnnType gnn_type_from_string(const std::string& s) {
  if (s == "GCN") return GnnType::GCN;
  if (s == "GAT") return GnnType::GAT;
  if (s == "GraphSAGE" || s == "SAGE") return GnnType::GraphSAGE;
  if (s == "GIN") return GnnType::GIN;
  throw ArgumentError("unknown gnn type '" + s + "'");
}

void GnnConfig::validate() const {
  if (num_layers < 2) throw ArgumentError("gnn config: num_layers must be at least 2");
  if (hidden_dim < 1) throw ArgumentError("gnn config: hidden_dim must be positive");
  if (gat_heads < 1) throw ArgumentError("gnn config: gat_heads must be positive");
  if (dropout_rate < real_t(0) || dropout_rate >= real_t(1))
    throw ArgumentError("gnn config: dropout_rate must be in [0, 1)");
  if (learning_rate <= real_t(0)) throw ArgumentError("gnn config: learning_rate must be positive");
  if (weight_decay < real_t(0)) throw ArgumentError("gnn config: weight_decay must be non-negative");
  if (use_jumping_knowledge && num_layers < 2)
    throw ArgumentError("gnn config: jumping knowledge needs at least 2 layers");
}

GnnConfig preset_config(OverfitLevel level, GnnType type) {
  GnnConfig c;
  c.gnn_type = type;
  if (level == OverfitLevel::Low) {
    c.num_layers = 3;
    c.hidden_dim = 16;
    c.learning_rate = real_t(6e-3);
    c.weight_decay = real_t(0.5);
    c.epochs = 400;
    c.use_batchnorm = true;
    c.dropout_rate = real_t(0.5);
    c.use_jumping_knowledge = true;
  } else {
    c.num_layers = 5;
    c.hidden_dim = 64;
    c.learning_rate = real_t(1e-3);
    c.weight_decay = real_t(0);
    c.epochs = 200;
    c.use_batchnorm = false;
    c.dropout_rate = real_t(0);
    c.use_jumping_knowledge = false;
  }
  c.gat_heads = 1;
  return c;
}

GnnModel init_gnn_model(const GnnConfig& config, std::size_t input_dim,
                        std::size_t num_classes) {
  config.validate();
  if (input_dim == 0) throw ArgumentError("gnn: input_dim must be positive");
  if (num_classes == 0) throw ArgumentError("gnn: num_classes must be positive");

  GnnModel m;
  m.config = config;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  Rng rng(derive_seed(config.seed, 0));
  const LayerDims dims = layer_dims(config, input_dim, num_classes);
  const std::size_t L = config.num_layers;

  auto add_param = [&](const std::string& name, Tensor t) {
    m.param_names.push_back(name);
    m.params.push_back(std::move(t));
  };

  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const bool final_layer = (l + 1 == L);
    const std::size_t in = dims.in[l], out = dims.out[l];
    switch (config.gnn_type) {
      case GnnType::GCN:
        add_param(p + "weight", glorot_uniform(in, out, rng));
        add_param(p + "bias", Tensor::zeros({out}));
        break;
      case GnnType::GraphSAGE:
        add_param(p + "weight_self", glorot_uniform(in, out, rng));
        add_param(p + "weight_neigh", glorot_uniform(in, out, rng));
        add_param(p + "bias", Tensor::zeros({out}));
        break;
      case GnnType::GIN:
        add_param(p + "mlp0.weight", glorot_uniform(in, config.hidden_dim, rng));
        add_param(p + "mlp0.bias", Tensor::zeros({config.hidden_dim}));
        add_param(p + "mlp1.weight", glorot_uniform(config.hidden_dim, out, rng));
        add_param(p + "mlp1.bias", Tensor::zeros({out}));
        break;
      case GnnType::GAT:
        for (std::size_t h = 0; h < config.gat_heads; ++h) {
          const std::string hp = p + "head" + std::to_string(h) + ".";
          add_param(hp + "weight", glorot_uniform(in, dims.per_head[l], rng));
          add_param(hp + "att_center", glorot_vec(dims.per_head[l], rng));
          add_param(hp + "att_neighbor", glorot_vec(dims.per_head[l], rng));
        }
        add_param(p + "bias", Tensor::zeros({final_layer ? num_classes : out}));
        break;
    }
    if (config.use_batchnorm && !final_layer) {
      Tensor gamma = Tensor::zeros({out});
      for (real_t& v : gamma.values) v = real_t(1);
      add_param(p + "bn.gamma", std::move(gamma));
      add_param(p + "bn.beta", Tensor::zeros({out}));
    }
  }
  if (config.use_batchnorm) {
    for (std::size_t l = 0; l + 1 < L; ++l) m.bn_states.push_back(BatchNormState::init(dims.out[l]));
  }
  return m;
}

LocalGraph LocalGraph::from_graph(const Graph& g) {
  LocalGraph lg;
  lg.n = g.num_nodes;
  lg.features = Tensor::matrix(g.num_nodes, g.feature_dim, g.features);
  lg.adj.resize(g.num_nodes);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    auto nb = g.neighbors(static_cast<std::uint32_t>(v));
    lg.adj[v].assign(nb.begin(), nb.end());
  }
  return lg;
}

LocalGraph LocalGraph::from_query(const SubgraphQuery& q) {
  q.validate();
  const std::size_t n = q.node_count(), d = q.feature_dim();
  LocalGraph lg;
  lg.n = n;
  lg.features = Tensor::zeros({n, d});
  std::copy(q.center_features.begin(), q.center_features.end(), lg.features.values.begin());
  for (std::size_t k = 0; k < q.neighbor_features.size(); ++k)
    std::copy(q.neighbor_features[k].begin(), q.neighbor_features[k].end(),
              lg.features.values.begin() + (k + 1) * d);
  lg.adj.resize(n);
  for (const auto& [a, b] : q.edges) {
    lg.adj[a].push_back(b);
    lg.adj[b].push_back(a);
  }
  for (auto& row : lg.adj) std::sort(row.begin(), row.end());
  return lg;
}

Tape::Id build_forward(Tape& tape, GnnModel& model, const LocalGraph& lg, bool training,
                       Rng* dropout_rng) {
  const GnnConfig& cfg = model.config;
  if (lg.features.cols() != model.input_dim)
    throw ArgumentError("gnn forward: feature dimension mismatch (got " +
                        std::to_string(lg.features.cols()) + ", model expects " +
                        std::to_string(model.input_dim) + ")");
  if (training && cfg.dropout_rate > real_t(0) && dropout_rng == nullptr)
    throw ArgumentError("gnn forward: dropout requires an rng in training mode");
  if (cfg.use_batchnorm && cfg.num_layers >= 2 && model.bn_states.size() != cfg.num_layers - 1)
    throw ArgumentError("gnn forward: batchnorm state count mismatch");

  SparseCoo agg;
  std::shared_ptr<AttentionEdges> att;
  switch (cfg.gnn_type) {
    case GnnType::GCN: agg = gcn_norm_coo(lg); break;
    case GnnType::GraphSAGE: agg = mean_coo(lg); break;
    case GnnType::GIN: agg = sum_self_coo(lg); break;
    case GnnType::GAT: att = attention_sets(lg); break;
  }

  auto P = [&](const std::string& name) {
    return tape.param(model.params[param_index(model, name)], name);
  };

  Tape::Id x = tape.input(lg.features, "features");
  std::vector<Tape::Id> jk_outputs;
  const std::size_t L = cfg.num_layers;

  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const bool final_layer = (l + 1 == L);

    Tape::Id in = x;
    if (cfg.use_jumping_knowledge && final_layer && L >= 2)
      in = jk_outputs.size() == 1 ? jk_outputs[0] : tape.concat_cols(jk_outputs);
    if (training && cfg.dropout_rate > real_t(0))
      in = tape.dropout(in, cfg.dropout_rate, true, *dropout_rng);

    Tape::Id z = -1;
    switch (cfg.gnn_type) {
      case GnnType::GCN: {
        Tape::Id h = tape.spmm(agg, in);
        z = tape.add_rowvec(tape.matmul(h, P(p + "weight")), P(p + "bias"));
        break;
      }
      case GnnType::GraphSAGE: {
        Tape::Id self_part = tape.matmul(in, P(p + "weight_self"));
        Tape::Id neigh_part = tape.matmul(tape.spmm(agg, in), P(p + "weight_neigh"));
        z = tape.add_rowvec(tape.add(self_part, neigh_part), P(p + "bias"));
        break;
      }
      case GnnType::GIN: {
        Tape::Id s = tape.spmm(agg, in);
        Tape::Id h = tape.relu(tape.add_rowvec(tape.matmul(s, P(p + "mlp0.weight")),
                                               P(p + "mlp0.bias")));
        z = tape.add_rowvec(tape.matmul(h, P(p + "mlp1.weight")), P(p + "mlp1.bias"));
        break;
      }
      case GnnType::GAT: {
        std::vector<Tape::Id> heads;
        for (std::size_t hd = 0; hd < cfg.gat_heads; ++hd) {
          const std::string hp = p + "head" + std::to_string(hd) + ".";
          Tape::Id h = tape.matmul(in, P(hp + "weight"));
          heads.push_back(tape.gat_attention(att, h, P(hp + "att_center"),
                                             P(hp + "att_neighbor"), kLeakySlope));
        }
        Tape::Id o;
        if (heads.size() == 1) {
          o = heads[0];
        } else if (final_layer) {
          // output layer averages heads
          o = heads[0];
          for (std::size_t hd = 1; hd < heads.size(); ++hd) o = tape.add(o, heads[hd]);
          o = tape.scale(o, real_t(1) / static_cast<real_t>(heads.size()));
        } else {
          o = tape.concat_cols(heads);
        }
        z = tape.add_rowvec(o, P(p + "bias"));
        break;
      }
    }

    if (!final_layer) {
      if (cfg.use_batchnorm)
        z = tape.batchnorm(z, P(p + "bn.gamma"), P(p + "bn.beta"), model.bn_states[l], training);
      z = cfg.gnn_type == GnnType::GAT ? tape.elu(z) : tape.relu(z);
      jk_outputs.push_back(z);
    }
    x = z;
  }
  return x;
}

TrainedGnn train_gnn(const GnnConfig& config, const Graph& train_graph,
                     const Graph& eval_graph, const std::vector<std::uint32_t>& eval_nodes,
                     std::string training_set_id) {
  config.validate();
  if (train_graph.num_nodes == 0) throw ArgumentError("train_gnn: empty training graph");
  if (train_graph.feature_dim != eval_graph.feature_dim)
    throw ArgumentError("train_gnn: feature dimension mismatch between graphs");
  if (train_graph.num_classes != eval_graph.num_classes)
    throw ArgumentError("train_gnn: class count mismatch between graphs");
  for (std::uint32_t v : eval_nodes)
    if (v >= eval_graph.num_nodes) throw ArgumentError("train_gnn: eval node out of range");

  TrainedGnn out;
  out.model = init_gnn_model(config, train_graph.feature_dim, train_graph.num_classes);
  out.training_set_id = std::move(training_set_id);

  const LocalGraph lg = LocalGraph::from_graph(train_graph);
  std::vector<Tensor*> params;
  params.reserve(out.model.params.size());
  for (Tensor& p : out.model.params) params.push_back(&p);

  AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  adam.reset(params);

  Rng dropout_rng(derive_seed(config.seed, 1));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    Tape::Id logits = build_forward(tape, out.model, lg, true, &dropout_rng);
    Tape::Id loss = tape.softmax_cross_entropy(logits, train_graph.labels);
    zero_grads(params);
    try {
      tape.backward(loss);
      adam.step(params);
    } catch (const NumericError& e) {
      throw NumericError("train_gnn: epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }

  std::vector<std::uint32_t> all_train(train_graph.num_nodes);
  for (std::size_t i = 0; i < all_train.size(); ++i) all_train[i] = static_cast<std::uint32_t>(i);
  out.train_accuracy = accuracy_on(out, train_graph, all_train);
  out.test_accuracy = accuracy_on(out, eval_graph, eval_nodes);
  return out;
}

Tensor gnn_forward(const TrainedGnn& m, const Graph& g) {
  // Inference mode reads batchnorm state and parameters without touching
  // them, so the const_cast never results in a mutation.
  GnnModel& model = const_cast<GnnModel&>(m.model);
  const LocalGraph lg = LocalGraph::from_graph(g);
  Tape tape;
  Tape::Id logits = build_forward(tape, model, lg, false, nullptr);
  return tape.value(logits);
}

Tensor gnn_forward(const TrainedGnn& m, const SubgraphQuery& q) {
  GnnModel& model = const_cast<GnnModel&>(m.model);
  const LocalGraph lg = LocalGraph::from_query(q);
  Tape tape;
  Tape::Id logits = build_forward(tape, model, lg, false, nullptr);
  return tape.value(logits);
}

namespace {

class GnnLabelOracle final : public LabelOracle {
 public:
  explicit GnnLabelOracle(const TrainedGnn& m) : model_(m) {}

 private:
  std::vector<std::int32_t> predict(const SubgraphQuery& q) const override {
    Tensor logits = gnn_forward(model_, q);
    const std::size_t c = logits.cols();
    std::vector<std::int32_t> labels(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i)
      labels[i] = static_cast<std::int32_t>(argmax_row(&logits.values[i * c], c));
    return labels;
  }
  const TrainedGnn& model_;
};

class GnnPosteriorOracle final : public PosteriorOracle {
 public:
  explicit GnnPosteriorOracle(const TrainedGnn& m) : model_(m) {}

 private:
  static std::vector<std::vector<real_t>> rows_of(Tensor logits,
                                                  const std::vector<std::uint32_t>& nodes) {
    softmax_rows_inplace(logits);
    const std::size_t c = logits.cols();
    std::vector<std::vector<real_t>> out;
    out.reserve(nodes.size());
    for (std::uint32_t v : nodes)
      out.emplace_back(logits.values.begin() + static_cast<std::size_t>(v) * c,
                       logits.values.begin() + static_cast<std::size_t>(v + 1) * c);
    return out;
  }

  std::vector<std::vector<real_t>> predict(const SubgraphQuery& q) const override {
    std::vector<std::uint32_t> all(q.node_count());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    return rows_of(gnn_forward(model_, q), all);
  }

  std::vector<std::vector<real_t>> predict_graph(
      const Graph& g, const std::vector<std::uint32_t>& nodes) const override {
    for (std::uint32_t v : nodes)
      if (v >= g.num_nodes) throw ArgumentError("posterior oracle: node out of range");
    return rows_of(gnn_forward(model_, g), nodes);
  }

  const TrainedGnn& model_;
};

void append_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64(const std::string& blob, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

ordered_json gnn_config_to_json(const GnnConfig& c) {
  ordered_json j;
  j["gnn_type"] = to_string(c.gnn_type);
  j["num_layers"] = c.num_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["use_batchnorm"] = c.use_batchnorm;
  j["dropout_rate"] = static_cast<double>(c.dropout_rate);
  j["use_jumping_knowledge"] = c.use_jumping_knowledge;
  j["gat_heads"] = c.gat_heads;
  j["learning_rate"] = static_cast<double>(c.learning_rate);
  j["weight_decay"] = static_cast<double>(c.weight_decay);
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  return j;
}

GnnConfig gnn_config_from_checkpoint_json(const ordered_json& j) {
  GnnConfig c;
  c.gnn_type = gnn_type_from_string(require_field<std::string>(j, "gnn_type", "checkpoint config"));
  c.num_layers = require_field<std::size_t>(j, "num_layers", "checkpoint config");
  c.hidden_dim = require_field<std::size_t>(j, "hidden_dim", "checkpoint config");
  c.use_batchnorm = require_field<bool>(j, "use_batchnorm", "checkpoint config");
  c.dropout_rate = static_cast<real_t>(require_field<double>(j, "dropout_rate", "checkpoint config"));
  c.use_jumping_knowledge = require_field<bool>(j, "use_jumping_knowledge", "checkpoint config");
  c.gat_heads = require_field<std::size_t>(j, "gat_heads", "checkpoint config");
  c.learning_rate = static_cast<real_t>(require_field<double>(j, "learning_rate", "checkpoint config"));
  c.weight_decay = static_cast<real_t>(require_field<double>(j, "weight_decay", "checkpoint config"));
  c.epochs = require_field<std::size_t>(j, "epochs", "checkpoint config");
  c.seed = require_field<std::uint64_t>(j, "seed", "checkpoint config");
  return c;
}

}  // namespace

std::unique_ptr<LabelOracle> make_label_oracle(const TrainedGnn& m) {
  return std::make_unique<GnnLabelOracle>(m);
}

std::unique_ptr<PosteriorOracle> make_posterior_oracle(const TrainedGnn& m) {
  return std::make_unique<GnnPosteriorOracle>(m);
}

void save_checkpoint(const TrainedGnn& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  ordered_json manifest;
  manifest["format"] = "labelmia-checkpoint-v1";
  manifest["config"] = gnn_config_to_json(m.model.config);
  manifest["input_dim"] = m.model.input_dim;
  manifest["num_classes"] = m.model.num_classes;
  manifest["training_set_id"] = m.training_set_id;
  manifest["train_accuracy"] = static_cast<double>(m.train_accuracy);
  manifest["test_accuracy"] = static_cast<double>(m.test_accuracy);
  ordered_json params = ordered_json::array();
  for (std::size_t i = 0; i < m.model.params.size(); ++i) {
    ordered_json p;
    p["name"] = m.model.param_names[i];
    p["shape"] = m.model.params[i].shape;
    params.push_back(p);
  }
  manifest["params"] = params;
  ordered_json bn = ordered_json::array();
  for (const auto& st : m.model.bn_states) bn.push_back(st.running_mean.size());
  manifest["batchnorm_dims"] = bn;

  std::string blob;
  for (const Tensor& p : m.model.params)
    for (real_t v : p.values) append_f64(blob, static_cast<double>(v));
  for (const auto& st : m.model.bn_states) {
    for (real_t v : st.running_mean) append_f64(blob, static_cast<double>(v));
    for (real_t v : st.running_var) append_f64(blob, static_cast<double>(v));
  }

  std::ofstream mf(dir / "model.json", std::ios::binary);
  if (!mf) throw FormatError("checkpoint: cannot write " + (dir / "model.json").string());
  mf << manifest.dump(2) << "\n";
  mf.close();
  std::ofstream bf(dir / "params.bin", std::ios::binary);
  if (!bf) throw FormatError("checkpoint: cannot write " + (dir / "params.bin").string());
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

TrainedGnn load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "model.json", std::ios::binary);
  if (!mf) throw FormatError("checkpoint manifest not found: " + (dir / "model.json").string());
  ordered_json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest parse error in " + (dir / "model.json").string() +
                      ": " + e.what());
  }
  if (field_or<std::string>(manifest, "format", "", "checkpoint") != "labelmia-checkpoint-v1")
    throw FormatError("checkpoint: unsupported format in " + (dir / "model.json").string());

  TrainedGnn m;
  m.model.config = gnn_config_from_checkpoint_json(manifest.at("config"));
  m.model.input_dim = require_field<std::size_t>(manifest, "input_dim", "checkpoint");
  m.model.num_classes = require_field<std::size_t>(manifest, "num_classes", "checkpoint");
  m.training_set_id = require_field<std::string>(manifest, "training_set_id", "checkpoint");
  m.train_accuracy = static_cast<real_t>(require_field<double>(manifest, "train_accuracy", "checkpoint"));
  m.test_accuracy = static_cast<real_t>(require_field<double>(manifest, "test_accuracy", "checkpoint"));

  std::ifstream bf(dir / "params.bin", std::ios::binary);
  if (!bf) throw FormatError("checkpoint blob not found: " + (dir / "params.bin").string());
  std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  std::size_t expected = 0;
  for (const auto& p : manifest.at("params")) {
    std::size_t n = 1;
    for (std::size_t s : p.at("shape").get<std::vector<std::size_t>>()) n *= s;
    expected += n;
  }
  for (const auto& d : manifest.at("batchnorm_dims"))
    expected += 2 * d.get<std::size_t>();
  if (blob.size() != expected * 8)
    throw FormatError("checkpoint blob size mismatch in " + (dir / "params.bin").string() +
                      ": expected " + std::to_string(expected * 8) + " bytes, got " +
                      std::to_string(blob.size()));

  std::size_t off = 0;
  for (const auto& p : manifest.at("params")) {
    Tensor t = Tensor::zeros(p.at("shape").get<std::vector<std::size_t>>());
    for (real_t& v : t.values) {
      v = static_cast<real_t>(read_f64(blob, off));
      off += 8;
    }
    m.model.param_names.push_back(p.at("name").get<std::string>());
    m.model.params.push_back(std::move(t));
  }
  for (const auto& d : manifest.at("batchnorm_dims")) {
    BatchNormState st = BatchNormState::init(d.get<std::size_t>());
    for (real_t& v : st.running_mean) {
      v = static_cast<real_t>(read_f64(blob, off));
      off += 8;
    }
    for (real_t& v : st.running_var) {
      v = static_cast<real_t>(read_f64(blob, off));
      off += 8;
    }
    m.model.bn_states.push_back(std::move(st));
  }
  return m;
}

}  // namespace lmia
