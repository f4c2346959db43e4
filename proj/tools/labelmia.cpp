// Command-line frontend. Subcommands mirror the pipeline stages; `run` and
// the sweep subcommands drive whole experiments from one config file.
//
// Exit codes: 0 success, 2 config/argument error, 3 data-format error,
// 4 numeric failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "labelmia/experiment.hpp"
#include "labelmia/json_util.hpp"
#include "text_util.hpp"

using namespace lmia;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool out_set = false;
  std::size_t repetitions = 0;
  bool repetitions_set = false;
  std::string format = "csv";
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ArgumentError(message);
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty())
    std::cout << content;
  else
    textio::write_file_atomic(out, content);
}

std::string metrics_csv(const MetricsReport& m) {
  std::string s = "acc,pre,rec,auc,f1,tpr_at_fpr,fpr_target,n_positive,n_negative\n";
  for (real_t v : {m.accuracy, m.precision, m.recall, m.auc, m.f1, m.tpr_at_fpr, m.fpr_target}) {
    s += fmt_real(static_cast<double>(v));
    s += ',';
  }
  s += std::to_string(m.n_positive) + ',' + std::to_string(m.n_negative) + '\n';
  return s;
}

std::string metrics_jsonl(const MetricsReport& m) {
  const ordered_json j = {{"accuracy", static_cast<double>(m.accuracy)},
                          {"precision", static_cast<double>(m.precision)},
                          {"recall", static_cast<double>(m.recall)},
                          {"f1", static_cast<double>(m.f1)},
                          {"auc", static_cast<double>(m.auc)},
                          {"tpr_at_fpr", static_cast<double>(m.tpr_at_fpr)},
                          {"fpr_target", static_cast<double>(m.fpr_target)},
                          {"n_positive", m.n_positive},
                          {"n_negative", m.n_negative}};
  return j.dump() + "\n";
}

ExperimentConfig config_with_overrides(const GlobalArgs& g) {
  require(!g.config_path.empty(), "--config is required");
  ExperimentConfig cfg = load_experiment_config(g.config_path);
  bool touched = false;
  if (g.seed_set) {
    cfg.base_seed = g.seed;
    touched = true;
  }
  if (g.repetitions_set) {
    cfg.repetitions = g.repetitions;
    touched = true;
  }
  if (g.out_set) {
    cfg.output_dir = g.out;
    touched = true;
  }
  // An override makes the file text stale; fall back to the canonical echo
  // so config_echo.json reflects what actually ran.
  if (touched) cfg.config_text.clear();
  cfg.validate();
  return cfg;
}

struct SplitRole {
  const std::vector<std::uint32_t>* train;
  const std::vector<std::uint32_t>* test;
};

SplitRole role_sets(const DatasetSplit& split, const std::string& role) {
  if (role == "target") return {&split.target_train, &split.target_test};
  if (role == "shadow") return {&split.shadow_train, &split.shadow_test};
  throw ArgumentError("--role must be target or shadow");
}

int cmd_gen_synthetic(const GlobalArgs& g, const SbmConfig& base, const std::string& encoding) {
  require(g.out_set, "gen-synthetic: --out directory is required");
  SbmConfig cfg = base;
  if (g.seed_set) cfg.seed = g.seed;
  const Graph graph = generate_sbm(cfg);
  save_bundle(graph, g.out, feature_encoding_from_string(encoding));
  std::cout << "bundle " << g.out << ": " << graph.num_nodes << " nodes, "
            << graph.num_undirected_edges() << " edges, " << graph.num_classes
            << " classes, dim " << graph.feature_dim << "\n";
  return kExitOk;
}

int cmd_split(const GlobalArgs& g, const std::string& bundle, const std::string& method,
              const std::optional<std::size_t>& per_class,
              const std::optional<std::size_t>& test_size) {
  require(g.out_set, "split: --out file is required");
  const Graph graph = load_bundle(bundle);
  SplitSizes sizes;
  sizes.per_class = per_class;
  sizes.test_size = test_size;
  const DatasetSplit split = sample_split(graph, sampling_method_from_string(method), sizes,
                                          g.seed_set ? g.seed : 0);
  save_split(split, g.out);
  std::cout << "split " << g.out << ": target " << split.target_train.size() << "/"
            << split.target_test.size() << ", shadow " << split.shadow_train.size() << "/"
            << split.shadow_test.size() << "\n";
  return kExitOk;
}

int cmd_train(const GlobalArgs& g, const std::string& bundle, const std::string& split_path,
              const std::string& role) {
  require(g.out_set, "train: --out checkpoint directory is required");
  require(!g.config_path.empty(), "train: --config is required for the model settings");
  const Graph graph = load_bundle(bundle);
  const DatasetSplit split = load_split(split_path, graph.num_nodes);
  const ExperimentConfig cfg = load_experiment_config(g.config_path);
  GnnConfig gnn = role == "shadow" ? cfg.shadow_gnn : cfg.target_gnn;
  const SplitRole sets = role_sets(split, role);
  gnn.seed = g.seed_set ? g.seed : cfg.base_seed;

  const InducedSubgraph train_view = induced_subgraph(graph, *sets.train);
  const InducedSubgraph test_view = induced_subgraph(graph, *sets.test);
  std::vector<std::uint32_t> eval_nodes(test_view.graph.num_nodes);
  std::iota(eval_nodes.begin(), eval_nodes.end(), 0u);
  const TrainedGnn model = train_gnn(gnn, train_view.graph, test_view.graph, eval_nodes, role);
  save_checkpoint(model, g.out);
  std::cout << role << " model " << g.out << ": train_acc "
            << fmt_real(static_cast<double>(model.train_accuracy)) << ", test_acc "
            << fmt_real(static_cast<double>(model.test_accuracy)) << "\n";
  return kExitOk;
}

int cmd_extract(const GlobalArgs& g, const std::string& bundle, const std::string& split_path,
                const std::string& role, const std::string& checkpoint) {
  require(g.out_set, "extract-features: --out file is required");
  const Graph graph = load_bundle(bundle);
  const DatasetSplit split = load_split(split_path, graph.num_nodes);
  const SplitRole sets = role_sets(split, role);
  const TrainedGnn model = load_checkpoint(checkpoint);
  RateSet rates;
  if (!g.config_path.empty()) rates = load_experiment_config(g.config_path).rates;

  auto oracle = make_label_oracle(model);
  const AttackDataset ds =
      build_attack_dataset(*oracle, graph, *sets.train, *sets.test, graph.labels, rates,
                           feature_extrema(graph), g.seed_set ? g.seed : 0);
  save_attack_dataset(ds, g.out);
  std::cout << "attack dataset " << g.out << ": " << ds.records.size() << " records, "
            << oracle->query_count() << " label queries\n";
  return kExitOk;
}

int cmd_attack(const GlobalArgs& g, const std::string& train_path, const std::string& eval_path) {
  require(g.out_set, "attack: --out model file is required");
  const AttackDataset train_ds = load_attack_dataset(train_path);
  AttackMlpConfig mlp;
  SelectionStrategy selection = SelectionStrategy::TestAcc;
  if (!g.config_path.empty()) {
    const ExperimentConfig cfg = load_experiment_config(g.config_path);
    mlp = cfg.attack;
    selection = cfg.selection;
  }
  mlp.seed = g.seed_set ? g.seed : 0;

  std::optional<AttackDataset> eval_ds;
  if (!eval_path.empty()) eval_ds = load_attack_dataset(eval_path);
  const std::vector<AttackRecord>* eval_list = eval_ds ? &eval_ds->records : nullptr;

  const IndexSplit parts =
      stratified_split_indices(train_ds.records, real_t(0.7), derive_seed(mlp.seed, 1));
  std::vector<AttackRecord> train_recs, holdout_recs;
  for (std::size_t i : parts.train) train_recs.push_back(train_ds.records[i]);
  for (std::size_t i : parts.holdout) holdout_recs.push_back(train_ds.records[i]);

  const AttackModel model =
      train_attack_model(train_recs, holdout_recs, mlp, selection, eval_list);
  save_attack_model(model, g.out);
  const EpochMetrics& chosen = model.trace.at(model.chosen_epoch - 1);
  std::cout << "attack model " << g.out << ": epoch " << model.chosen_epoch << "/"
            << mlp.epochs << ", train_acc " << fmt_real(static_cast<double>(chosen.train_acc))
            << ", holdout_acc " << fmt_real(static_cast<double>(chosen.test_acc)) << "\n";
  return kExitOk;
}

int cmd_evaluate(const GlobalArgs& g, const std::string& model_path,
                 const std::string& data_path, double fpr_target) {
  const AttackModel model = load_attack_model(model_path);
  const AttackDataset ds = load_attack_dataset(data_path);
  const std::vector<real_t> scores = attack_scores(model, ds.records);
  std::vector<int> labels(ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) labels[i] = ds.records[i].membership;
  const MetricsReport m =
      compute_metrics(scores, labels, real_t(0.5), static_cast<real_t>(fpr_target));
  emit(g.out_set ? g.out : "", g.format == "csv" ? metrics_csv(m) : metrics_jsonl(m));
  return kExitOk;
}

int cmd_run(const GlobalArgs& g) {
  const ExperimentConfig cfg = config_with_overrides(g);
  const RunReport report = run_experiment(cfg);
  for (const RepetitionReport& rep : report.repetitions)
    if (!rep.ok)
      std::cerr << "repetition " << rep.index << " failed: " << rep.error << "\n";
  if (report.successful == 0) {
    std::cerr << "all " << report.repetitions.size() << " repetitions failed\n";
    return kExitConfig;
  }
  std::cout << "run " << report.config_fingerprint << ": " << report.successful << "/"
            << report.repetitions.size() << " repetitions ok\n"
            << "attack: acc " << fmt_real(static_cast<double>(report.attack_aggregate.accuracy.mean))
            << ", auc " << fmt_real(static_cast<double>(report.attack_aggregate.auc.mean))
            << ", tpr@" << fmt_real(static_cast<double>(cfg.fpr_target)) << " "
            << fmt_real(static_cast<double>(report.attack_aggregate.tpr_at_fpr.mean)) << "\n"
            << "target: train_acc " << fmt_real(static_cast<double>(report.target_train_acc.mean))
            << ", test_acc " << fmt_real(static_cast<double>(report.target_test_acc.mean)) << "\n";
  if (!cfg.output_dir.empty()) {
    std::cout << "wrote";
    for (const std::string& name : report.artifacts) std::cout << ' ' << name;
    std::cout << " to " << cfg.output_dir << "\n";
  }
  return kExitOk;
}

int cmd_defense_grid(const GlobalArgs& g) {
  const ExperimentConfig cfg = config_with_overrides(g);
  const std::vector<DefenseGridRow> rows = run_defense_grid(cfg);
  std::cout << "row N D R J train_acc test_acc avg_attack_acc\n";
  std::size_t ok_rows = 0;
  for (const DefenseGridRow& row : rows) {
    std::cout << row.row << "   " << (row.flags.normalization ? 'y' : '-') << ' '
              << (row.flags.dropout ? 'y' : '-') << ' '
              << (row.flags.regularization ? 'y' : '-') << ' '
              << (row.flags.jumping_knowledge ? 'y' : '-');
    if (row.ok) {
      ++ok_rows;
      std::cout << ' ' << fmt_real(static_cast<double>(row.target_train_acc)) << ' '
                << fmt_real(static_cast<double>(row.target_test_acc)) << ' '
                << fmt_real(static_cast<double>(row.avg_attack_accuracy)) << "\n";
    } else {
      std::cout << " failed: " << row.error << "\n";
    }
  }
  if (!cfg.output_dir.empty())
    std::cout << "wrote defense_grid.csv to " << cfg.output_dir << "\n";
  return ok_rows == 0 ? kExitConfig : kExitOk;
}

int cmd_relaxation(const GlobalArgs& g) {
  require(!g.config_path.empty(), "--config is required");
  const std::string text = textio::read_text_file(g.config_path);
  const std::optional<RelaxationSpec> spec = parse_relaxation_spec(text);
  require(spec.has_value(), "relaxation-matrix: config has no relaxation block");
  GlobalArgs adjusted = g;
  const ExperimentConfig cfg = config_with_overrides(adjusted);
  const RelaxationResult result = run_relaxation_matrix(cfg, *spec);

  const std::size_t n = result.labels.size();
  std::cout << "target\\shadow";
  for (const std::string& label : result.labels) std::cout << ' ' << label;
  std::cout << "\n";
  std::size_t ok_cells = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::cout << result.labels[i];
    for (std::size_t j = 0; j < n; ++j) {
      const RelaxationCell& cell = result.cells[i * n + j];
      if (cell.ok) {
        ++ok_cells;
        std::cout << ' ' << fmt_real(static_cast<double>(cell.avg_attack_accuracy));
      } else {
        std::cout << " failed";
      }
    }
    std::cout << "\n";
  }
  if (!cfg.output_dir.empty())
    std::cout << "wrote relaxation_matrix.csv to " << cfg.output_dir << "\n";
  return ok_cells == 0 ? kExitConfig : kExitOk;
}

int cmd_importance(const GlobalArgs& g, const std::string& model_path,
                   const std::string& data_path, const std::string& metric,
                   std::size_t repeats) {
  const AttackModel model = load_attack_model(model_path);
  const AttackDataset ds = load_attack_dataset(data_path);
  const std::size_t n = ds.records.size();
  const std::size_t d = model.input_dim;
  require(n > 0, "importance: dataset is empty");
  require(!ds.records.front().features.empty() && ds.records.front().features.size() == d,
          "importance: dataset feature width does not match the model");

  std::vector<real_t> flat(n * d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(ds.records[i].features.begin(), ds.records[i].features.end(),
              flat.begin() + i * d);
    labels[i] = ds.records[i].membership;
  }
  const auto score_fn = [&](const std::vector<real_t>& matrix) {
    std::vector<AttackRecord> recs(n);
    for (std::size_t i = 0; i < n; ++i)
      recs[i].features.assign(matrix.begin() + i * d, matrix.begin() + (i + 1) * d);
    return attack_scores(model, recs);
  };
  const ImportanceMetric im =
      metric == "accuracy" ? ImportanceMetric::Accuracy : ImportanceMetric::Auc;
  const std::vector<ImportanceEntry> entries =
      permutation_importance(flat, n, d, labels, attack_feature_names(ds.rates), score_fn, im,
                             repeats, g.seed_set ? g.seed : 0);

  std::string out_text;
  if (g.format == "csv") {
    out_text = "feature,importance\n";
    for (const ImportanceEntry& e : entries)
      out_text += e.name + ',' + fmt_real(static_cast<double>(e.importance)) + '\n';
  } else {
    for (const ImportanceEntry& e : entries) {
      const ordered_json j = {{"feature", e.name},
                              {"importance", static_cast<double>(e.importance)}};
      out_text += j.dump() + "\n";
    }
  }
  emit(g.out_set ? g.out : "", out_text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"label-only membership inference attacks against node-level GNNs"};
  app.require_subcommand(1);

  GlobalArgs g;
  auto* opt_config = app.add_option("--config", g.config_path, "experiment config JSON file");
  auto* opt_seed = app.add_option("--seed", g.seed, "seed (overrides the config's base_seed)");
  auto* opt_out = app.add_option("--out", g.out, "output file or directory");
  auto* opt_reps =
      app.add_option("--repetitions", g.repetitions, "repetition count (overrides the config)");
  app.add_option("--format", g.format, "tabular output format")
      ->check(CLI::IsMember({"csv", "json-lines"}));

  SbmConfig sbm;
  std::string encoding = "binary_f32";
  auto* gen = app.add_subcommand("gen-synthetic", "generate an SBM graph bundle");
  gen->add_option("--nodes", sbm.num_nodes, "node count");
  gen->add_option("--classes", sbm.num_classes, "class count");
  gen->add_option("--intra", sbm.intra_edge_prob, "intra-class edge probability");
  gen->add_option("--inter", sbm.inter_edge_prob, "inter-class edge probability");
  gen->add_option("--dim", sbm.feature_dim, "feature dimension");
  gen->add_option("--signal", sbm.feature_signal, "class separation in noise sigmas");
  gen->add_option("--encoding", encoding, "feature encoding")
      ->check(CLI::IsMember({"binary_f32", "csv"}));

  std::string bundle, method = "balanced";
  std::optional<std::size_t> per_class, test_size;
  auto* split = app.add_subcommand("split", "sample target/shadow train/test node sets");
  split->add_option("--bundle", bundle, "graph bundle directory")->required();
  split->add_option("--method", method, "sampling method")
      ->check(CLI::IsMember({"random", "balanced", "partially_balanced"}));
  split->add_option("--per-class", per_class, "per-class set size override");
  split->add_option("--test-size", test_size, "test set size override");

  std::string role = "target", split_path;
  auto* train = app.add_subcommand("train", "train one GNN on a split role");
  train->add_option("--bundle", bundle, "graph bundle directory")->required();
  train->add_option("--split", split_path, "split file")->required();
  train->add_option("--role", role, "which side to train")
      ->check(CLI::IsMember({"target", "shadow"}));

  std::string checkpoint;
  auto* extract = app.add_subcommand("extract-features",
                                     "query a trained model and build an attack dataset");
  extract->add_option("--bundle", bundle, "graph bundle directory")->required();
  extract->add_option("--split", split_path, "split file")->required();
  extract->add_option("--role", role, "which side to probe")
      ->check(CLI::IsMember({"target", "shadow"}));
  extract->add_option("--checkpoint", checkpoint, "model checkpoint directory")->required();

  std::string train_data, eval_data;
  auto* attack = app.add_subcommand("attack", "train the attack classifier from a dataset");
  attack->add_option("--train-data", train_data, "attack dataset CSV (shadow side)")->required();
  attack->add_option("--eval-data", eval_data,
                     "attack dataset CSV scored per epoch (evaluate_acc selection)");

  std::string model_path, data_path;
  double fpr_target = 0.1;
  auto* evaluate = app.add_subcommand("evaluate", "score an attack model on a dataset");
  evaluate->add_option("--model", model_path, "attack model file")->required();
  evaluate->add_option("--data", data_path, "attack dataset CSV")->required();
  evaluate->add_option("--fpr-target", fpr_target, "FPR operating point for TPR@FPR");

  auto* run = app.add_subcommand("run", "run a full experiment from a config file");
  auto* grid = app.add_subcommand("defense-grid", "run all 16 defense-flag combinations");
  auto* relax = app.add_subcommand("relaxation-matrix",
                                   "cross target/shadow settings along the config's axis");

  std::string importance_metric = "auc";
  std::size_t repeats = 10;
  auto* importance =
      app.add_subcommand("importance", "permutation feature importance of an attack model");
  importance->add_option("--model", model_path, "attack model file")->required();
  importance->add_option("--data", data_path, "attack dataset CSV")->required();
  importance->add_option("--metric", importance_metric, "importance metric")
      ->check(CLI::IsMember({"auc", "accuracy"}));
  importance->add_option("--repeats", repeats, "shuffles per column");

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  g.seed_set = opt_seed->count() > 0;
  g.out_set = opt_out->count() > 0;
  g.repetitions_set = opt_reps->count() > 0;
  (void)opt_config;

  try {
    if (gen->parsed()) return cmd_gen_synthetic(g, sbm, encoding);
    if (split->parsed()) return cmd_split(g, bundle, method, per_class, test_size);
    if (train->parsed()) return cmd_train(g, bundle, split_path, role);
    if (extract->parsed()) return cmd_extract(g, bundle, split_path, role, checkpoint);
    if (attack->parsed()) return cmd_attack(g, train_data, eval_data);
    if (evaluate->parsed()) return cmd_evaluate(g, model_path, data_path, fpr_target);
    if (run->parsed()) return cmd_run(g);
    if (grid->parsed()) return cmd_defense_grid(g);
    if (relax->parsed()) return cmd_relaxation(g);
    if (importance->parsed()) return cmd_importance(g, model_path, data_path, importance_metric, repeats);
    std::cerr << "no subcommand given\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
