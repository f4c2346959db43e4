#include "labelmia/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <thread>

#include "labelmia/json_util.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace lmia {

namespace {

// Per-repetition stage streams; every randomized stage draws from its own
// derived seed so stages stay independent and reorderable.
constexpr std::uint64_t kStreamTargetSplit = 1;
constexpr std::uint64_t kStreamShadowSplit = 2;
constexpr std::uint64_t kStreamTargetModel = 3;
constexpr std::uint64_t kStreamShadowModel = 4;
constexpr std::uint64_t kStreamShadowExtract = 5;
constexpr std::uint64_t kStreamTargetExtract = 6;
constexpr std::uint64_t kStreamAttackModel = 7;
constexpr std::uint64_t kStreamAttackSplit = 8;
constexpr std::uint64_t kStreamBaselineModel = 9;
// Run-level streams (graphs are generated once, not per repetition).
constexpr std::uint64_t kStreamDatasetTarget = 100;
constexpr std::uint64_t kStreamDatasetShadow = 101;

}  // namespace

std::string DataSource::label() const {
  if (is_synthetic) return "synthetic";
  std::string s = bundle;
  while (!s.empty() && (s.back() == '/' || s.back() == '\\')) s.pop_back();
  const std::string name = fs::path(s).filename().string();
  return name.empty() ? s : name;
}

void DataSource::validate() const {
  if (is_synthetic) {
    const SbmConfig& c = synthetic;
    if (c.num_classes < 2) throw ArgumentError("synthetic dataset: need at least 2 classes");
    if (c.num_nodes < c.num_classes)
      throw ArgumentError("synthetic dataset: need at least one node per class");
    if (c.feature_dim == 0) throw ArgumentError("synthetic dataset: feature_dim must be positive");
    if (!(c.inter_edge_prob >= 0) || !(c.intra_edge_prob <= 1) ||
        c.inter_edge_prob > c.intra_edge_prob)
      throw ArgumentError("synthetic dataset: need 0 <= inter <= intra <= 1");
    if (!(c.feature_signal >= 0))
      throw ArgumentError("synthetic dataset: feature_signal must be non-negative");
  } else if (bundle.empty()) {
    throw ArgumentError("dataset: empty bundle path");
  }
}

void ExperimentConfig::validate() const {
  target_data.validate();
  if (shadow_data) shadow_data->validate();
  target_gnn.validate();
  shadow_gnn.validate();
  rates.validate();
  attack.validate();
  if (repetitions == 0) throw ArgumentError("experiment: repetitions must be at least 1");
  if (!(fpr_target > 0) || fpr_target > 1)
    throw ArgumentError("experiment: fpr_target must lie in (0, 1]");
  for (std::size_t i = 0; i < baselines.size(); ++i)
    for (std::size_t j = i + 1; j < baselines.size(); ++j)
      if (baselines[i] == baselines[j])
        throw ArgumentError("experiment: baseline '" + to_string(baselines[i]) +
                            "' listed twice");
}

namespace {

DataSource parse_data_source(const ordered_json& obj, const std::string& ctx) {
  reject_unknown_keys(obj, {"bundle", "synthetic"}, ctx);
  DataSource src;
  const bool has_bundle = obj.contains("bundle");
  const bool has_synthetic = obj.contains("synthetic");
  if (has_bundle == has_synthetic)
    throw ArgumentError(ctx + ": give exactly one of 'bundle' or 'synthetic'");
  if (has_bundle) {
    src.bundle = require_field<std::string>(obj, "bundle", ctx);
  } else {
    src.is_synthetic = true;
    const ordered_json& s = obj.at("synthetic");
    const std::string sctx = ctx + ".synthetic";
    reject_unknown_keys(s,
                        {"num_nodes", "num_classes", "intra_edge_prob", "inter_edge_prob",
                         "feature_dim", "feature_signal", "seed"},
                        sctx);
    SbmConfig c;
    c.num_nodes = field_or<std::size_t>(s, "num_nodes", c.num_nodes, sctx);
    c.num_classes = field_or<std::size_t>(s, "num_classes", c.num_classes, sctx);
    c.intra_edge_prob = static_cast<real_t>(
        field_or<double>(s, "intra_edge_prob", static_cast<double>(c.intra_edge_prob), sctx));
    c.inter_edge_prob = static_cast<real_t>(
        field_or<double>(s, "inter_edge_prob", static_cast<double>(c.inter_edge_prob), sctx));
    c.feature_dim = field_or<std::size_t>(s, "feature_dim", c.feature_dim, sctx);
    c.feature_signal = static_cast<real_t>(
        field_or<double>(s, "feature_signal", static_cast<double>(c.feature_signal), sctx));
    if (s.contains("seed")) {
      src.synthetic_seed_set = true;
      c.seed = require_field<std::uint64_t>(s, "seed", sctx);
    }
    src.synthetic = c;
  }
  src.validate();
  return src;
}

GnnConfig parse_gnn_config(const ordered_json& obj, const std::string& ctx) {
  reject_unknown_keys(obj,
                      {"gnn_type", "preset", "num_layers", "hidden_dim", "use_batchnorm",
                       "dropout_rate", "use_jumping_knowledge", "gat_heads", "learning_rate",
                       "weight_decay", "epochs"},
                      ctx);
  const GnnType type =
      gnn_type_from_string(require_field<std::string>(obj, "gnn_type", ctx));
  GnnConfig c;
  if (obj.contains("preset")) {
    const std::string preset = require_field<std::string>(obj, "preset", ctx);
    if (preset == "low")
      c = preset_config(OverfitLevel::Low, type);
    else if (preset == "high")
      c = preset_config(OverfitLevel::High, type);
    else
      throw ArgumentError(ctx + ": unknown preset '" + preset + "' (expected low or high)");
  } else {
    c.gnn_type = type;
  }
  c.num_layers = field_or<std::size_t>(obj, "num_layers", c.num_layers, ctx);
  c.hidden_dim = field_or<std::size_t>(obj, "hidden_dim", c.hidden_dim, ctx);
  c.use_batchnorm = field_or<bool>(obj, "use_batchnorm", c.use_batchnorm, ctx);
  c.dropout_rate = static_cast<real_t>(
      field_or<double>(obj, "dropout_rate", static_cast<double>(c.dropout_rate), ctx));
  c.use_jumping_knowledge =
      field_or<bool>(obj, "use_jumping_knowledge", c.use_jumping_knowledge, ctx);
  c.gat_heads = field_or<std::size_t>(obj, "gat_heads", c.gat_heads, ctx);
  c.learning_rate = static_cast<real_t>(
      field_or<double>(obj, "learning_rate", static_cast<double>(c.learning_rate), ctx));
  c.weight_decay = static_cast<real_t>(
      field_or<double>(obj, "weight_decay", static_cast<double>(c.weight_decay), ctx));
  c.epochs = field_or<std::size_t>(obj, "epochs", c.epochs, ctx);
  return c;
}

ordered_json parse_document(const std::string& json_text, const std::string& what) {
  try {
    return ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": " + std::string(e.what()));
  }
}

ordered_json data_source_to_json(const DataSource& src) {
  if (!src.is_synthetic) return {{"bundle", src.bundle}};
  ordered_json s = {{"num_nodes", src.synthetic.num_nodes},
                    {"num_classes", src.synthetic.num_classes},
                    {"intra_edge_prob", static_cast<double>(src.synthetic.intra_edge_prob)},
                    {"inter_edge_prob", static_cast<double>(src.synthetic.inter_edge_prob)},
                    {"feature_dim", src.synthetic.feature_dim},
                    {"feature_signal", static_cast<double>(src.synthetic.feature_signal)}};
  if (src.synthetic_seed_set) s["seed"] = src.synthetic.seed;
  return {{"synthetic", std::move(s)}};
}

ordered_json gnn_config_to_json(const GnnConfig& c) {
  return {{"gnn_type", to_string(c.gnn_type)},
          {"num_layers", c.num_layers},
          {"hidden_dim", c.hidden_dim},
          {"use_batchnorm", c.use_batchnorm},
          {"dropout_rate", static_cast<double>(c.dropout_rate)},
          {"use_jumping_knowledge", c.use_jumping_knowledge},
          {"gat_heads", c.gat_heads},
          {"learning_rate", static_cast<double>(c.learning_rate)},
          {"weight_decay", static_cast<double>(c.weight_decay)},
          {"epochs", c.epochs}};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  const ordered_json j = parse_document(json_text, "experiment config");
  reject_unknown_keys(j,
                      {"target_dataset", "shadow_dataset", "target_gnn", "shadow_gnn",
                       "sampling", "rate_set", "attack", "fpr_target", "repetitions",
                       "base_seed", "baselines", "output_dir", "save_artifacts",
                       "relaxation"},
                      "experiment config");

  ExperimentConfig c;
  if (!j.contains("target_dataset"))
    throw ArgumentError("experiment config: missing key 'target_dataset'");
  c.target_data = parse_data_source(j.at("target_dataset"), "target_dataset");
  if (j.contains("shadow_dataset"))
    c.shadow_data = parse_data_source(j.at("shadow_dataset"), "shadow_dataset");

  if (!j.contains("target_gnn"))
    throw ArgumentError("experiment config: missing key 'target_gnn'");
  c.target_gnn = parse_gnn_config(j.at("target_gnn"), "target_gnn");
  c.shadow_gnn =
      j.contains("shadow_gnn") ? parse_gnn_config(j.at("shadow_gnn"), "shadow_gnn") : c.target_gnn;

  if (j.contains("sampling")) {
    const ordered_json& s = j.at("sampling");
    reject_unknown_keys(s, {"method", "per_class", "test_size"}, "sampling");
    c.sampling = sampling_method_from_string(require_field<std::string>(s, "method", "sampling"));
    if (s.contains("per_class"))
      c.sizes.per_class = require_field<std::size_t>(s, "per_class", "sampling");
    if (s.contains("test_size"))
      c.sizes.test_size = require_field<std::size_t>(s, "test_size", "sampling");
  }

  if (j.contains("rate_set")) {
    c.rates.rates.clear();
    for (const double r : require_field<std::vector<double>>(j, "rate_set", "experiment config"))
      c.rates.rates.push_back(static_cast<real_t>(r));
  }

  if (j.contains("attack")) {
    const ordered_json& a = j.at("attack");
    reject_unknown_keys(a,
                        {"hidden_dim", "num_hidden_layers", "learning_rate", "epochs",
                         "batch_size", "selection"},
                        "attack");
    c.attack.hidden_dim = field_or<std::size_t>(a, "hidden_dim", c.attack.hidden_dim, "attack");
    c.attack.num_hidden_layers =
        field_or<std::size_t>(a, "num_hidden_layers", c.attack.num_hidden_layers, "attack");
    c.attack.learning_rate = static_cast<real_t>(field_or<double>(
        a, "learning_rate", static_cast<double>(c.attack.learning_rate), "attack"));
    c.attack.epochs = field_or<std::size_t>(a, "epochs", c.attack.epochs, "attack");
    c.attack.batch_size = field_or<std::size_t>(a, "batch_size", c.attack.batch_size, "attack");
    if (a.contains("selection"))
      c.selection =
          selection_strategy_from_string(require_field<std::string>(a, "selection", "attack"));
  }

  c.fpr_target = static_cast<real_t>(
      field_or<double>(j, "fpr_target", static_cast<double>(c.fpr_target), "experiment config"));
  c.repetitions = field_or<std::size_t>(j, "repetitions", c.repetitions, "experiment config");
  c.base_seed = field_or<std::uint64_t>(j, "base_seed", c.base_seed, "experiment config");
  if (j.contains("baselines"))
    for (const std::string& b :
         require_field<std::vector<std::string>>(j, "baselines", "experiment config"))
      c.baselines.push_back(baseline_variant_from_string(b));
  c.output_dir = field_or<std::string>(j, "output_dir", c.output_dir, "experiment config");
  c.save_artifacts =
      field_or<bool>(j, "save_artifacts", c.save_artifacts, "experiment config");

  c.config_text = json_text;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  return parse_experiment_config(textio::read_text_file(path));
}

std::string canonical_config_json(const ExperimentConfig& config) {
  ordered_json j;
  j["target_dataset"] = data_source_to_json(config.target_data);
  if (config.shadow_data) j["shadow_dataset"] = data_source_to_json(*config.shadow_data);
  j["target_gnn"] = gnn_config_to_json(config.target_gnn);
  j["shadow_gnn"] = gnn_config_to_json(config.shadow_gnn);
  ordered_json sampling = {{"method", to_string(config.sampling)}};
  if (config.sizes.per_class) sampling["per_class"] = *config.sizes.per_class;
  if (config.sizes.test_size) sampling["test_size"] = *config.sizes.test_size;
  j["sampling"] = std::move(sampling);
  ordered_json rates = ordered_json::array();
  for (real_t r : config.rates.rates) rates.push_back(static_cast<double>(r));
  j["rate_set"] = std::move(rates);
  j["attack"] = {{"hidden_dim", config.attack.hidden_dim},
                 {"num_hidden_layers", config.attack.num_hidden_layers},
                 {"learning_rate", static_cast<double>(config.attack.learning_rate)},
                 {"epochs", config.attack.epochs},
                 {"batch_size", config.attack.batch_size},
                 {"selection", to_string(config.selection)}};
  j["fpr_target"] = static_cast<double>(config.fpr_target);
  j["repetitions"] = config.repetitions;
  j["base_seed"] = config.base_seed;
  ordered_json baselines = ordered_json::array();
  for (BaselineVariant v : config.baselines) baselines.push_back(to_string(v));
  j["baselines"] = std::move(baselines);
  // output_dir and save_artifacts are deliberately absent: they direct where
  // results go, not what the experiment is, so they must not perturb the
  // fingerprint.
  return j.dump(2) + "\n";
}

namespace {

Graph load_source(const DataSource& src, std::uint64_t base_seed, std::uint64_t stream) {
  if (!src.is_synthetic) return load_bundle(src.bundle);
  SbmConfig c = src.synthetic;
  if (!src.synthetic_seed_set) c.seed = derive_seed(base_seed, stream);
  return generate_sbm(c);
}

std::vector<AttackRecord> gather(const std::vector<AttackRecord>& records,
                                 const std::vector<std::size_t>& idx) {
  std::vector<AttackRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

MetricsReport score_records(const AttackModel& model, const std::vector<AttackRecord>& records,
                            real_t fpr_target, std::uint64_t seed,
                            const std::string& fingerprint) {
  const std::vector<real_t> scores = attack_scores(model, records);
  std::vector<int> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].membership;
  MetricsReport m = compute_metrics(scores, labels, real_t(0.5), fpr_target);
  m.seed = seed;
  m.config_fingerprint = fingerprint;
  return m;
}

RepetitionReport run_one_repetition(const ExperimentConfig& cfg, const Graph& target_graph,
                                    const Graph* shadow_graph, std::size_t index,
                                    const std::string& fingerprint,
                                    const fs::path* artifact_dir) {
  RepetitionReport rep;
  rep.index = index;
  rep.seed = cfg.base_seed + index;
  const std::uint64_t rs = rep.seed;
  std::string stage = "split";
  try {
    const DatasetSplit target_split =
        sample_split(target_graph, cfg.sampling, cfg.sizes, derive_seed(rs, kStreamTargetSplit));
    const Graph& shadow_view = shadow_graph ? *shadow_graph : target_graph;
    DatasetSplit shadow_split_storage;
    const DatasetSplit* shadow_split = &target_split;
    if (shadow_graph) {
      shadow_split_storage =
          sample_split(*shadow_graph, cfg.sampling, cfg.sizes, derive_seed(rs, kStreamShadowSplit));
      shadow_split = &shadow_split_storage;
    }

    stage = "train_target";
    GnnConfig target_cfg = cfg.target_gnn;
    target_cfg.seed = derive_seed(rs, kStreamTargetModel);
    const InducedSubgraph target_train = induced_subgraph(target_graph, target_split.target_train);
    const InducedSubgraph target_test = induced_subgraph(target_graph, target_split.target_test);
    std::vector<std::uint32_t> target_eval(target_test.graph.num_nodes);
    std::iota(target_eval.begin(), target_eval.end(), 0u);
    const TrainedGnn target_model =
        train_gnn(target_cfg, target_train.graph, target_test.graph, target_eval, "target");
    rep.target_train_acc = target_model.train_accuracy;
    rep.target_test_acc = target_model.test_accuracy;

    stage = "train_shadow";
    GnnConfig shadow_cfg = cfg.shadow_gnn;
    shadow_cfg.seed = derive_seed(rs, kStreamShadowModel);
    const InducedSubgraph shadow_train = induced_subgraph(shadow_view, shadow_split->shadow_train);
    const InducedSubgraph shadow_test = induced_subgraph(shadow_view, shadow_split->shadow_test);
    std::vector<std::uint32_t> shadow_eval(shadow_test.graph.num_nodes);
    std::iota(shadow_eval.begin(), shadow_eval.end(), 0u);
    const TrainedGnn shadow_model =
        train_gnn(shadow_cfg, shadow_train.graph, shadow_test.graph, shadow_eval, "shadow");
    rep.shadow_train_acc = shadow_model.train_accuracy;
    rep.shadow_test_acc = shadow_model.test_accuracy;

    // The masking extrema come from what the adversary holds: the whole
    // shadow graph when it is separate, otherwise the induced subgraph on
    // the shadow partition.
    stage = "extrema";
    std::pair<real_t, real_t> extrema;
    if (shadow_graph) {
      extrema = feature_extrema(*shadow_graph);
    } else {
      std::vector<std::uint32_t> shadow_nodes = shadow_split->shadow_train;
      shadow_nodes.insert(shadow_nodes.end(), shadow_split->shadow_test.begin(),
                          shadow_split->shadow_test.end());
      std::sort(shadow_nodes.begin(), shadow_nodes.end());
      extrema = feature_extrema(induced_subgraph(target_graph, shadow_nodes).graph);
    }

    stage = "extract_shadow";
    auto shadow_oracle = make_label_oracle(shadow_model);
    const AttackDataset shadow_ds = build_attack_dataset(
        *shadow_oracle, shadow_view, shadow_split->shadow_train, shadow_split->shadow_test,
        shadow_view.labels, cfg.rates, extrema, derive_seed(rs, kStreamShadowExtract));
    rep.queries.shadow_label = shadow_oracle->query_count();

    stage = "extract_target";
    auto target_oracle = make_label_oracle(target_model);
    const AttackDataset target_ds = build_attack_dataset(
        *target_oracle, target_graph, target_split.target_train, target_split.target_test,
        target_graph.labels, cfg.rates, extrema, derive_seed(rs, kStreamTargetExtract));
    rep.queries.target_label = target_oracle->query_count();

    stage = "train_attack";
    // 70/30, reused verbatim by every baseline below so all of them see the
    // same split.
    const IndexSplit attack_split = stratified_split_indices(
        shadow_ds.records, real_t(0.7), derive_seed(rs, kStreamAttackSplit));
    const std::vector<AttackRecord> attack_train = gather(shadow_ds.records, attack_split.train);
    const std::vector<AttackRecord> attack_holdout =
        gather(shadow_ds.records, attack_split.holdout);
    AttackMlpConfig attack_cfg = cfg.attack;
    attack_cfg.seed = derive_seed(rs, kStreamAttackModel);
    const std::vector<AttackRecord>* eval_list =
        cfg.selection == SelectionStrategy::EvaluateAcc ? &target_ds.records : nullptr;
    const AttackModel attack_model =
        train_attack_model(attack_train, attack_holdout, attack_cfg, cfg.selection, eval_list);
    rep.attack_chosen_epoch = attack_model.chosen_epoch;

    stage = "evaluate";
    rep.attack = score_records(attack_model, target_ds.records, cfg.fpr_target, rs, fingerprint);

    stage = "baselines";
    if (!cfg.baselines.empty()) {
      auto shadow_posterior = make_posterior_oracle(shadow_model);
      auto target_posterior = make_posterior_oracle(target_model);
      for (std::size_t bi = 0; bi < cfg.baselines.size(); ++bi) {
        const BaselineVariant variant = cfg.baselines[bi];
        const auto collect = [&](PosteriorOracle& oracle, const Graph& view,
                                 const std::vector<std::uint32_t>& members,
                                 const std::vector<std::uint32_t>& nonmembers) {
          std::vector<AttackRecord> recs;
          recs.reserve(members.size() + nonmembers.size());
          for (std::uint32_t v : members)
            recs.push_back({baseline_features(oracle, view, v, variant), 1});
          for (std::uint32_t v : nonmembers)
            recs.push_back({baseline_features(oracle, view, v, variant), 0});
          return recs;
        };
        const std::vector<AttackRecord> shadow_recs =
            collect(*shadow_posterior, shadow_view, shadow_split->shadow_train,
                    shadow_split->shadow_test);
        const std::vector<AttackRecord> target_recs = collect(
            *target_posterior, target_graph, target_split.target_train, target_split.target_test);
        AttackMlpConfig baseline_cfg = cfg.attack;
        baseline_cfg.seed = derive_seed(rs, kStreamBaselineModel, bi);
        const std::vector<AttackRecord>* baseline_eval =
            cfg.selection == SelectionStrategy::EvaluateAcc ? &target_recs : nullptr;
        const AttackModel baseline_model =
            train_attack_model(gather(shadow_recs, attack_split.train),
                               gather(shadow_recs, attack_split.holdout), baseline_cfg,
                               cfg.selection, baseline_eval);
        rep.baselines.emplace_back(
            variant, score_records(baseline_model, target_recs, cfg.fpr_target, rs, fingerprint));
      }
      rep.queries.baseline_shadow_posterior = shadow_posterior->query_count();
      rep.queries.baseline_target_posterior = target_posterior->query_count();
    }

    if (artifact_dir) {
      stage = "artifacts";
      fs::create_directories(*artifact_dir);
      save_checkpoint(target_model, *artifact_dir / "target_model");
      save_checkpoint(shadow_model, *artifact_dir / "shadow_model");
      save_attack_dataset(shadow_ds, *artifact_dir / "shadow_dataset.csv");
      save_attack_dataset(target_ds, *artifact_dir / "target_dataset.csv");
      save_attack_model(attack_model, *artifact_dir / "attack_model.json");
    }

    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.error = stage + ": " + e.what();
  }
  return rep;
}

MetricStat stat_of(const std::vector<real_t>& values) {
  MetricStat s;
  if (values.empty()) return s;
  bool all_equal = true;
  real_t mean = 0;
  for (real_t v : values) {
    mean += v;
    all_equal = all_equal && v == values.front();
  }
  mean /= static_cast<real_t>(values.size());
  s.mean = mean;
  if (values.size() > 1 && !all_equal) {
    real_t var = 0;
    for (real_t v : values) var += (v - mean) * (v - mean);
    s.stddev = std::sqrt(var / static_cast<real_t>(values.size() - 1));
  }
  return s;
}

ordered_json metrics_to_json(const MetricsReport& m) {
  return {{"accuracy", static_cast<double>(m.accuracy)},
          {"precision", static_cast<double>(m.precision)},
          {"recall", static_cast<double>(m.recall)},
          {"f1", static_cast<double>(m.f1)},
          {"auc", static_cast<double>(m.auc)},
          {"tpr_at_fpr", static_cast<double>(m.tpr_at_fpr)},
          {"fpr_target", static_cast<double>(m.fpr_target)},
          {"n_positive", m.n_positive},
          {"n_negative", m.n_negative},
          {"seed", m.seed},
          {"config_fingerprint", m.config_fingerprint}};
}

ordered_json repetition_to_json(const RepetitionReport& rep) {
  ordered_json j;
  j["repetition"] = rep.index;
  j["seed"] = rep.seed;
  j["status"] = rep.ok ? "ok" : "failed";
  if (!rep.ok) {
    j["error"] = rep.error;
    return j;
  }
  j["target"] = {{"train_acc", static_cast<double>(rep.target_train_acc)},
                 {"test_acc", static_cast<double>(rep.target_test_acc)}};
  j["shadow"] = {{"train_acc", static_cast<double>(rep.shadow_train_acc)},
                 {"test_acc", static_cast<double>(rep.shadow_test_acc)}};
  j["attack"] = metrics_to_json(rep.attack);
  j["attack_chosen_epoch"] = rep.attack_chosen_epoch;
  if (!rep.baselines.empty()) {
    ordered_json b;
    for (const auto& [variant, metrics] : rep.baselines)
      b[to_string(variant)] = metrics_to_json(metrics);
    j["baselines"] = std::move(b);
  }
  j["query_counts"] = {
      {"shadow_label", rep.queries.shadow_label},
      {"target_label", rep.queries.target_label},
      {"main_attack_target_posterior", rep.queries.main_attack_target_posterior},
      {"baseline_shadow_posterior", rep.queries.baseline_shadow_posterior},
      {"baseline_target_posterior", rep.queries.baseline_target_posterior}};
  return j;
}

ordered_json stat_to_json(const MetricStat& s) {
  return {{"mean", static_cast<double>(s.mean)}, {"stddev", static_cast<double>(s.stddev)}};
}

ordered_json aggregate_to_json(const AggregateSummary& a) {
  return {{"count", a.count},
          {"fpr_target", static_cast<double>(a.fpr_target)},
          {"accuracy", stat_to_json(a.accuracy)},
          {"precision", stat_to_json(a.precision)},
          {"recall", stat_to_json(a.recall)},
          {"f1", stat_to_json(a.f1)},
          {"auc", stat_to_json(a.auc)},
          {"tpr_at_fpr", stat_to_json(a.tpr_at_fpr)}};
}

void write_run_outputs(RunReport& report) {
  const fs::path dir(report.config.output_dir);
  fs::create_directories(dir);
  const auto emit = [&](const std::string& name, const std::string& content) {
    textio::write_file_atomic(dir / name, content);
    report.artifacts.push_back(name);
  };

  std::string lines;
  for (const RepetitionReport& rep : report.repetitions)
    lines += repetition_to_json(rep).dump() + "\n";
  emit("reports.jsonl", lines);

  // Aggregate row: dataset and architecture, the target model's accuracies,
  // then the attack metrics in report order.
  std::string csv = "dataset,gnn,test_acc,train_acc,acc,pre,rec,auc,f1,tpr_at_fpr,n\n";
  csv += report.config.target_data.label();
  csv += ',';
  csv += to_string(report.config.target_gnn.gnn_type);
  if (report.successful > 0) {
    const AggregateSummary& a = report.attack_aggregate;
    for (real_t v : {report.target_test_acc.mean, report.target_train_acc.mean,
                     a.accuracy.mean, a.precision.mean, a.recall.mean, a.auc.mean, a.f1.mean,
                     a.tpr_at_fpr.mean}) {
      csv += ',';
      csv += fmt_real(static_cast<double>(v));
    }
  } else {
    csv += ",,,,,,,,";
  }
  csv += ',';
  csv += std::to_string(report.successful);
  csv += '\n';
  emit("aggregate.csv", csv);

  if (!report.config.baselines.empty()) {
    std::string bcsv = "variant,acc,pre,rec,auc,f1,tpr_at_fpr,n\n";
    for (const auto& [variant, agg] : report.baseline_aggregates) {
      bcsv += to_string(variant);
      if (agg.count > 0) {
        for (real_t v : {agg.accuracy.mean, agg.precision.mean, agg.recall.mean, agg.auc.mean,
                         agg.f1.mean, agg.tpr_at_fpr.mean}) {
          bcsv += ',';
          bcsv += fmt_real(static_cast<double>(v));
        }
      } else {
        bcsv += ",,,,,,";
      }
      bcsv += ',';
      bcsv += std::to_string(agg.count);
      bcsv += '\n';
    }
    emit("baseline_aggregate.csv", bcsv);
  }

  emit("config_echo.json", report.config.config_text.empty()
                               ? canonical_config_json(report.config)
                               : report.config.config_text);

  ordered_json summary;
  summary["dataset"] = report.config.target_data.label();
  summary["gnn"] = to_string(report.config.target_gnn.gnn_type);
  summary["repetitions"] = report.repetitions.size();
  summary["successful"] = report.successful;
  summary["fpr_target"] = static_cast<double>(report.config.fpr_target);
  summary["config_fingerprint"] = report.config_fingerprint;
  if (report.successful > 0) {
    summary["target"] = {{"train_acc", stat_to_json(report.target_train_acc)},
                         {"test_acc", stat_to_json(report.target_test_acc)}};
    summary["shadow"] = {{"train_acc", stat_to_json(report.shadow_train_acc)},
                         {"test_acc", stat_to_json(report.shadow_test_acc)}};
    summary["attack"] = aggregate_to_json(report.attack_aggregate);
    if (!report.baseline_aggregates.empty()) {
      ordered_json b;
      for (const auto& [variant, agg] : report.baseline_aggregates)
        b[to_string(variant)] = aggregate_to_json(agg);
      summary["baselines"] = std::move(b);
    }
  }
  std::vector<std::string> artifacts = report.artifacts;
  artifacts.push_back("summary.json");
  summary["artifacts"] = artifacts;
  emit("summary.json", summary.dump(2) + "\n");
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();

  RunReport report;
  report.config = config;
  report.config_fingerprint = fingerprint_hex(canonical_config_json(config));

  const Graph target_graph =
      load_source(config.target_data, config.base_seed, kStreamDatasetTarget);
  Graph shadow_graph_storage;
  const Graph* shadow_graph = nullptr;
  if (config.shadow_data) {
    shadow_graph_storage =
        load_source(*config.shadow_data, config.base_seed, kStreamDatasetShadow);
    shadow_graph = &shadow_graph_storage;
  }

  // Repetitions are independent (own seeds, own models), so run them on a
  // small worker pool. Results land in index order regardless of completion
  // order, which keeps reports byte-stable.
  const bool want_artifacts = config.save_artifacts && !config.output_dir.empty();
  report.repetitions.resize(config.repetitions);
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("LMIA_WORKERS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(cap, &end, 10);
    if (end && *end == '\0' && v >= 1) hw = static_cast<std::size_t>(v);
  }
  const std::size_t n_workers = std::min<std::size_t>(hw, config.repetitions);
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t i; (i = next.fetch_add(1)) < config.repetitions;) {
      const fs::path artifact_dir = fs::path(config.output_dir) / ("rep" + std::to_string(i));
      report.repetitions[i] =
          run_one_repetition(config, target_graph, shadow_graph, i, report.config_fingerprint,
                             want_artifacts ? &artifact_dir : nullptr);
    }
  };
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<MetricsReport> ok_attacks;
  std::vector<real_t> tgt_train, tgt_test, shd_train, shd_test;
  for (const RepetitionReport& rep : report.repetitions) {
    if (!rep.ok) continue;
    ok_attacks.push_back(rep.attack);
    tgt_train.push_back(rep.target_train_acc);
    tgt_test.push_back(rep.target_test_acc);
    shd_train.push_back(rep.shadow_train_acc);
    shd_test.push_back(rep.shadow_test_acc);
  }
  report.successful = ok_attacks.size();
  if (report.successful > 0) {
    report.attack_aggregate = aggregate_repetitions(ok_attacks);
    report.target_train_acc = stat_of(tgt_train);
    report.target_test_acc = stat_of(tgt_test);
    report.shadow_train_acc = stat_of(shd_train);
    report.shadow_test_acc = stat_of(shd_test);
    for (std::size_t bi = 0; bi < config.baselines.size(); ++bi) {
      std::vector<MetricsReport> rows;
      for (const RepetitionReport& rep : report.repetitions)
        if (rep.ok && bi < rep.baselines.size()) rows.push_back(rep.baselines[bi].second);
      AggregateSummary agg;
      if (!rows.empty()) agg = aggregate_repetitions(rows);
      report.baseline_aggregates.emplace_back(config.baselines[bi], agg);
    }
  }

  if (config.save_artifacts && !config.output_dir.empty())
    for (std::size_t i = 0; i < report.repetitions.size(); ++i)
      if (report.repetitions[i].ok) report.artifacts.push_back("rep" + std::to_string(i));

  if (!config.output_dir.empty()) write_run_outputs(report);
  return report;
}

std::vector<DefenseFlags> defense_grid_rows() {
  const bool y = true, n = false;
  return {{n, n, n, n},                                                  // none
          {y, n, n, n}, {n, y, n, n}, {n, n, y, n}, {n, n, n, y},        // singles
          {y, y, n, n}, {y, n, y, n}, {y, n, n, y},                      // pairs
          {n, y, y, n}, {n, y, n, y}, {n, n, y, y},
          {y, y, y, n}, {y, y, n, y}, {y, n, y, y}, {n, y, y, y},        // triples
          {y, y, y, y}};                                                 // all
}

std::vector<DefenseGridRow> run_defense_grid(const ExperimentConfig& base) {
  base.validate();
  const auto rows = defense_grid_rows();
  std::vector<DefenseGridRow> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ExperimentConfig cfg = base;
    cfg.output_dir.clear();
    cfg.save_artifacts = false;
    cfg.config_text.clear();
    const auto apply = [&](GnnConfig& g) {
      GnnConfig fresh = preset_config(OverfitLevel::High, g.gnn_type);
      fresh.use_batchnorm = rows[r].normalization;
      fresh.dropout_rate = rows[r].dropout ? real_t(0.5) : real_t(0);
      fresh.weight_decay = rows[r].regularization ? real_t(0.5) : real_t(0);
      fresh.use_jumping_knowledge = rows[r].jumping_knowledge;
      g = fresh;
    };
    apply(cfg.target_gnn);
    apply(cfg.shadow_gnn);

    DefenseGridRow row;
    row.row = r;
    row.flags = rows[r];
    try {
      const RunReport rep = run_experiment(cfg);
      row.successful = rep.successful;
      if (rep.successful == 0) {
        row.ok = false;
        row.error = rep.repetitions.empty() ? "no repetitions" : rep.repetitions.front().error;
      } else {
        row.ok = true;
        row.target_train_acc = rep.target_train_acc.mean;
        row.target_test_acc = rep.target_test_acc.mean;
        row.avg_attack_accuracy = rep.attack_aggregate.accuracy.mean;
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    out.push_back(row);
  }

  if (!base.output_dir.empty()) {
    fs::create_directories(base.output_dir);
    std::string csv =
        "row,normalization,dropout,regularization,jumping_knowledge,status,train_acc,"
        "test_acc,avg_attack_acc,n\n";
    for (const DefenseGridRow& row : out) {
      csv += std::to_string(row.row);
      for (bool f : {row.flags.normalization, row.flags.dropout, row.flags.regularization,
                     row.flags.jumping_knowledge})
        csv += f ? ",1" : ",0";
      csv += row.ok ? ",ok" : ",failed";
      if (row.ok) {
        csv += ',' + fmt_real(static_cast<double>(row.target_train_acc));
        csv += ',' + fmt_real(static_cast<double>(row.target_test_acc));
        csv += ',' + fmt_real(static_cast<double>(row.avg_attack_accuracy));
      } else {
        csv += ",,,";
      }
      csv += ',' + std::to_string(row.successful);
      csv += '\n';
    }
    textio::write_file_atomic(fs::path(base.output_dir) / "defense_grid.csv", csv);
  }
  return out;
}

std::string to_string(RelaxationAxis a) {
  return a == RelaxationAxis::Datasets ? "datasets" : "architectures";
}

RelaxationAxis relaxation_axis_from_string(const std::string& s) {
  if (s == "datasets") return RelaxationAxis::Datasets;
  if (s == "architectures") return RelaxationAxis::Architectures;
  throw ArgumentError("unknown relaxation axis '" + s + "'");
}

std::optional<RelaxationSpec> parse_relaxation_spec(const std::string& json_text) {
  const ordered_json j = parse_document(json_text, "experiment config");
  if (!j.contains("relaxation")) return std::nullopt;
  const ordered_json& r = j.at("relaxation");
  reject_unknown_keys(r, {"axis", "entries"}, "relaxation");
  RelaxationSpec spec;
  spec.axis = relaxation_axis_from_string(require_field<std::string>(r, "axis", "relaxation"));
  if (!r.contains("entries") || !r.at("entries").is_array())
    throw ArgumentError("relaxation: 'entries' must be an array");
  const ordered_json& entries = r.at("entries");
  if (entries.size() < 2) throw ArgumentError("relaxation: need at least 2 entries");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (spec.axis == RelaxationAxis::Datasets) {
      spec.datasets.push_back(
          parse_data_source(entries[i], "relaxation entry " + std::to_string(i)));
    } else {
      if (!entries[i].is_string())
        throw ArgumentError("relaxation: architecture entries must be strings");
      spec.gnn_types.push_back(gnn_type_from_string(entries[i].get<std::string>()));
    }
  }
  return spec;
}

RelaxationResult run_relaxation_matrix(const ExperimentConfig& base,
                                       const RelaxationSpec& spec) {
  base.validate();
  const std::size_t n =
      spec.axis == RelaxationAxis::Datasets ? spec.datasets.size() : spec.gnn_types.size();
  if (n < 2) throw ArgumentError("relaxation: need at least 2 entries");

  RelaxationResult result;
  result.axis = spec.axis;
  for (std::size_t i = 0; i < n; ++i)
    result.labels.push_back(spec.axis == RelaxationAxis::Datasets
                                ? spec.datasets[i].label()
                                : to_string(spec.gnn_types[i]));

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      ExperimentConfig cfg = base;
      cfg.output_dir.clear();
      cfg.save_artifacts = false;
      cfg.config_text.clear();
      if (spec.axis == RelaxationAxis::Datasets) {
        cfg.target_data = spec.datasets[i];
        cfg.shadow_data = spec.datasets[j];
      } else {
        cfg.target_gnn.gnn_type = spec.gnn_types[i];
        cfg.shadow_gnn.gnn_type = spec.gnn_types[j];
      }
      RelaxationCell cell;
      cell.target_index = i;
      cell.shadow_index = j;
      try {
        const RunReport rep = run_experiment(cfg);
        if (rep.successful == 0) {
          cell.ok = false;
          cell.error = rep.repetitions.empty() ? "no repetitions" : rep.repetitions.front().error;
        } else {
          cell.ok = true;
          cell.avg_attack_accuracy = rep.attack_aggregate.accuracy.mean;
        }
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      result.cells.push_back(cell);
    }
  }

  if (!base.output_dir.empty()) {
    fs::create_directories(base.output_dir);
    std::string csv = "target\\shadow";
    for (const std::string& label : result.labels) csv += ',' + label;
    csv += '\n';
    for (std::size_t i = 0; i < n; ++i) {
      csv += result.labels[i];
      for (std::size_t j = 0; j < n; ++j) {
        const RelaxationCell& cell = result.cells[i * n + j];
        csv += ',';
        if (cell.ok) csv += fmt_real(static_cast<double>(cell.avg_attack_accuracy));
      }
      csv += '\n';
    }
    textio::write_file_atomic(fs::path(base.output_dir) / "relaxation_matrix.csv", csv);
  }
  return result;
}

}  // namespace lmia
