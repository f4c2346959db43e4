#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "labelmia/attack.hpp"
#include "labelmia/data.hpp"
#include "labelmia/gnn.hpp"
#include "labelmia/metrics.hpp"

namespace lmia {

/// Where a graph comes from: a bundle directory on disk or an SBM spec.
/// A synthetic source without an explicit seed gets one derived from the
/// experiment's base seed, so the graph is fixed across repetitions but
/// changes with the base seed.
struct DataSource {
  std::string bundle;
  bool is_synthetic = false;
  SbmConfig synthetic;
  bool synthetic_seed_set = false;

  std::string label() const;

  void validate() const;
};

/// Everything one experiment needs. The per-repetition seeds for splits,
/// model initialization, extraction and the attack trainer are derived from
/// base_seed + repetition index; the seed fields inside the nested GNN and
/// attack configs are ignored and overwritten per repetition.
struct ExperimentConfig {
  DataSource target_data;
  /// Absent: target and shadow share one graph and one four-way split.
  /// Present: the shadow side gets its own graph and its own split.
  std::optional<DataSource> shadow_data;
  GnnConfig target_gnn;
  GnnConfig shadow_gnn;
  SamplingMethod sampling = SamplingMethod::Balanced;
  SplitSizes sizes;
  RateSet rates = RateSet::default_set();
  AttackMlpConfig attack;
  SelectionStrategy selection = SelectionStrategy::TestAcc;
  real_t fpr_target = real_t(0.1);
  std::size_t repetitions = 1;
  std::uint64_t base_seed = 0;
  std::vector<BaselineVariant> baselines;
  std::string output_dir;      // empty: keep the report in memory only
  bool save_artifacts = false; // also write checkpoints, datasets, attack models

  /// Raw config document for the byte-for-byte echo; canonical form is used
  /// when the config was built programmatically.
  std::string config_text;

  void validate() const;
};

/// Strict parse: unknown keys anywhere are an error.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical JSON form, used for fingerprints and as the echo fallback.
/// Omits output_dir and save_artifacts so the fingerprint identifies the
/// experiment itself, not where its results are written.
std::string canonical_config_json(const ExperimentConfig& config);

struct QueryCounts {
  std::uint64_t shadow_label = 0;
  std::uint64_t target_label = 0;
  /// Always zero: the main attack cannot reach a posterior interface.
  std::uint64_t main_attack_target_posterior = 0;
  std::uint64_t baseline_shadow_posterior = 0;
  std::uint64_t baseline_target_posterior = 0;
};

struct RepetitionReport {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // "stage: message" when not ok

  real_t target_train_acc = real_t(0);
  real_t target_test_acc = real_t(0);
  real_t shadow_train_acc = real_t(0);
  real_t shadow_test_acc = real_t(0);
  MetricsReport attack;
  std::size_t attack_chosen_epoch = 0;
  std::vector<std::pair<BaselineVariant, MetricsReport>> baselines;
  QueryCounts queries;
};

struct RunReport {
  ExperimentConfig config;
  std::string config_fingerprint;
  std::vector<RepetitionReport> repetitions;  // ordered by index
  std::size_t successful = 0;

  AggregateSummary attack_aggregate;  // over successful repetitions
  MetricStat target_train_acc, target_test_acc;
  MetricStat shadow_train_acc, shadow_test_acc;
  std::vector<std::pair<BaselineVariant, AggregateSummary>> baseline_aggregates;

  std::vector<std::string> artifacts;  // paths written, relative to output_dir
};

/// Full protocol, per repetition: split, train target and shadow models,
/// extract shadow-side features, train the attack model, extract and score
/// target-side features, then any configured posterior baselines. A failing
/// repetition is recorded with its stage and message; the rest continue.
/// When config.output_dir is set, reports.jsonl, aggregate.csv,
/// baseline_aggregate.csv (if baselines ran), summary.json and
/// config_echo.json are written there atomically.
/// Repetitions run on a worker pool sized by hardware concurrency (capped by
/// the LMIA_WORKERS environment variable when set); results are identical to
/// a sequential run.
RunReport run_experiment(const ExperimentConfig& config);

struct DefenseFlags {
  bool normalization = false;
  bool dropout = false;
  bool regularization = false;
  bool jumping_knowledge = false;
};

/// The 16 on/off combinations in the fixed report order: no defenses, the
/// four singles, the six pairs, the four triples, then all four.
std::vector<DefenseFlags> defense_grid_rows();

struct DefenseGridRow {
  std::size_t row = 0;
  DefenseFlags flags;
  bool ok = false;
  std::string error;
  real_t target_train_acc = real_t(0);
  real_t target_test_acc = real_t(0);
  real_t avg_attack_accuracy = real_t(0);
  std::size_t successful = 0;
};

/// One run_experiment per flag combination. Each cell starts from the
/// high-overfit preset for the configured architecture(s) and applies the
/// row's flags to both the target and the shadow model: normalization turns
/// on batchnorm, dropout sets rate 0.5, regularization sets weight decay
/// 0.5, jumping knowledge turns on the concatenation. Writes
/// defense_grid.csv under config.output_dir when set.
std::vector<DefenseGridRow> run_defense_grid(const ExperimentConfig& base);

enum class RelaxationAxis { Datasets, Architectures };

std::string to_string(RelaxationAxis a);
RelaxationAxis relaxation_axis_from_string(const std::string& s);

struct RelaxationSpec {
  RelaxationAxis axis = RelaxationAxis::Datasets;
  std::vector<DataSource> datasets;  // axis = Datasets
  std::vector<GnnType> gnn_types;    // axis = Architectures
};

/// Optional "relaxation" block of a config document.
std::optional<RelaxationSpec> parse_relaxation_spec(const std::string& json_text);

struct RelaxationCell {
  std::size_t target_index = 0;
  std::size_t shadow_index = 0;
  bool ok = false;
  std::string error;
  real_t avg_attack_accuracy = real_t(0);
};

struct RelaxationResult {
  RelaxationAxis axis = RelaxationAxis::Datasets;
  std::vector<std::string> labels;
  std::vector<RelaxationCell> cells;  // row-major over (target, shadow)
};

/// Cell (i, j) runs the base experiment with target setting i and shadow
/// setting j along the chosen axis; the shadow side is always explicit, so
/// the diagonal uses two independent splits of the same source. Writes
/// relaxation_matrix.csv under config.output_dir when set.
RelaxationResult run_relaxation_matrix(const ExperimentConfig& base,
                                       const RelaxationSpec& spec);

}  // namespace lmia
