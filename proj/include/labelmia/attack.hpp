#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "labelmia/graph.hpp"
#include "labelmia/oracle.hpp"
#include "labelmia/tensor.hpp"

namespace lmia {

/// Masking rates swept during feature extraction.
struct RateSet {
  std::vector<real_t> rates;

  static RateSet default_set();  // {0.2, 0.4, 0.6, 0.8, 1.0}

  /// Non-empty, strictly ascending, each rate in (0, 1].
  void validate() const;
};

/// Version tag embedded in serialized attack datasets. Bump when the column
/// set or ordering changes.
inline constexpr const char* kAttackSchemaVersion = "mia-features-v1";

/// Rate as it appears in column names: shortest decimal with at least one
/// fractional digit, so 1 prints as "1.0".
std::string fmt_rate(real_t r);

/// Column names in serialization order: n_num, w_i_node, o_label, then for
/// every rate (ascending) and direction (max before min) the seven
/// per-query fields i_none, i_all, i_step, n_acc_all, n_acc_none,
/// n_acc_avg, change_p, each suffixed _{direction}_{rate}.
std::vector<std::string> attack_feature_names(const RateSet& rates);

/// 3 + 14 * |rates|.
std::size_t attack_feature_count(const RateSet& rates);

/// Index of `name` in the schema; throws ArgumentError if absent.
std::size_t attack_feature_index(const RateSet& rates, const std::string& name);

/// One node's worth of attack features (schema order) plus its membership
/// bit: 1 for target/shadow training members, 0 for non-members.
struct AttackRecord {
  std::vector<real_t> features;
  std::int32_t membership = 0;
};

/// Queries the label oracle about one node and assembles its feature
/// vector. `view` is the querying party's graph (it supplies neighbor ids
/// and true feature rows); `neighbor_truths` aligns with the node's 1-hop
/// neighbors in ascending id order; `extrema` is the (min, max) pair used
/// as masking values. Per (rate, direction) one masked row is drawn and
/// reused by the 0-hop and 1-hop queries, then the star's edges are dropped
/// one at a time in seeded random order with a re-query after each drop.
/// Issues exactly 2 * |rates| * (2 + degree) oracle queries.
std::vector<real_t> extract_attack_features(LabelOracle& oracle, const Graph& view,
                                            std::uint32_t node, std::int32_t ground_truth,
                                            const std::vector<std::int32_t>& neighbor_truths,
                                            const RateSet& rates,
                                            std::pair<real_t, real_t> extrema,
                                            std::uint64_t seed);

struct AttackDataset {
  RateSet rates;
  std::vector<std::uint32_t> node_ids;  // aligned with records
  std::vector<AttackRecord> records;
};

/// Extracts features for members (label 1) then non-members (label 0).
/// `truths` holds the ground-truth class of every node in `view`; per-node
/// extraction seeds are derived from (seed, node id), so record contents do
/// not depend on the order nodes are listed in.
AttackDataset build_attack_dataset(LabelOracle& oracle, const Graph& view,
                                   const std::vector<std::uint32_t>& member_nodes,
                                   const std::vector<std::uint32_t>& nonmember_nodes,
                                   const std::vector<std::int32_t>& truths,
                                   const RateSet& rates, std::pair<real_t, real_t> extrema,
                                   std::uint64_t seed);

/// CSV with a schema-version comment line, then a header row
/// (node_id, membership, feature columns), then one row per node.
void save_attack_dataset(const AttackDataset& ds, const std::filesystem::path& path);
AttackDataset load_attack_dataset(const std::filesystem::path& path);

struct IndexSplit {
  std::vector<std::size_t> train, holdout;
};

/// Train/holdout partition of record indices, stratified by membership:
/// floor(fraction * n) per class goes to train. Both lists come back sorted
/// so downstream record order stays canonical.
IndexSplit stratified_split_indices(const std::vector<AttackRecord>& records,
                                    real_t train_fraction, std::uint64_t seed);

struct AttackMlpConfig {
  std::size_t hidden_dim = 64;
  std::size_t num_hidden_layers = 2;
  real_t learning_rate = real_t(1e-3);
  std::size_t epochs = 300;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Which per-epoch metric picks the returned snapshot. EvaluateAcc scores
/// epochs on a separate oracle-evaluation list the adversary would not have
/// in practice; models selected that way are flagged oracle_only.
enum class SelectionStrategy { TrainAcc, TestAcc, TrainLoss, TestLoss, EvaluateAcc };

std::string to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(const std::string& s);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  real_t train_loss = real_t(0);
  real_t train_acc = real_t(0);
  real_t test_loss = real_t(0);
  real_t test_acc = real_t(0);
  bool has_evaluate_acc = false;
  real_t evaluate_acc = real_t(0);
};

/// Membership classifier over standardized attack features. Columns with
/// zero variance on the training list pass through unscaled.
struct AttackModel {
  AttackMlpConfig config;
  std::size_t input_dim = 0;
  std::vector<real_t> col_mean;  // passthrough columns hold mean 0, std 1
  std::vector<real_t> col_std;
  std::vector<Tensor> params;
  std::vector<std::string> param_names;
  SelectionStrategy selection = SelectionStrategy::TestAcc;
  std::size_t chosen_epoch = 0;
  bool oracle_only = false;
  std::vector<EpochMetrics> trace;
};

/// Trains the MLP with shuffled minibatches and returns the epoch snapshot
/// that optimizes `selection` (earliest epoch on ties). `holdout` feeds the
/// test_* trace columns and may be empty unless a test_* strategy is
/// chosen; `evaluation` is required for EvaluateAcc.
AttackModel train_attack_model(const std::vector<AttackRecord>& train,
                               const std::vector<AttackRecord>& holdout,
                               const AttackMlpConfig& config,
                               SelectionStrategy selection = SelectionStrategy::TestAcc,
                               const std::vector<AttackRecord>* evaluation = nullptr);

/// Membership probabilities in [0, 1], aligned with `records`.
std::vector<real_t> attack_scores(const AttackModel& model,
                                  const std::vector<AttackRecord>& records);

/// Single-file JSON serialization; round-trips scores bitwise.
void save_attack_model(const AttackModel& model, const std::filesystem::path& path);
AttackModel load_attack_model(const std::filesystem::path& path);

/// The four probability-based reference attacks. They need posterior access
/// and therefore a strictly stronger threat model than the main attack.
enum class BaselineVariant { Hop0, Hop2, Combined, AllProb };

std::string to_string(BaselineVariant v);
BaselineVariant baseline_variant_from_string(const std::string& s);

/// Posterior-derived features for one node: top-2 posterior values from a
/// 0-hop query (Hop0), from the node's 2-hop induced subgraph (Hop2), their
/// concatenation (Combined), or the node's full posterior row when the
/// whole view is fed (AllProb).
std::vector<real_t> baseline_features(PosteriorOracle& oracle, const Graph& view,
                                      std::uint32_t node, BaselineVariant variant);

}  // namespace lmia
