#include "labelmia/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "labelmia/autograd.hpp"
#include "labelmia/json_util.hpp"
#include "labelmia/optim.hpp"
#include "text_util.hpp"

namespace lmia {

RateSet RateSet::default_set() {
  return RateSet{{real_t(0.2), real_t(0.4), real_t(0.6), real_t(0.8), real_t(1.0)}};
}

void RateSet::validate() const {
  if (rates.empty()) throw ArgumentError("rate set: must be non-empty");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (!(rates[i] > real_t(0)) || rates[i] > real_t(1))
      throw ArgumentError("rate set: rate " + fmt_real(rates[i]) + " outside (0, 1]");
    if (i > 0 && !(rates[i] > rates[i - 1]))
      throw ArgumentError("rate set: rates must be strictly ascending");
  }
}

std::string fmt_rate(real_t r) {
  std::string s = fmt_real(static_cast<double>(r));
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
  return s;
}

namespace {

constexpr const char* kBlockFields[7] = {"i_none",     "i_all",     "i_step", "n_acc_all",
                                         "n_acc_none", "n_acc_avg", "change_p"};
constexpr const char* kDirections[2] = {"max", "min"};

}  // namespace

std::vector<std::string> attack_feature_names(const RateSet& rates) {
  rates.validate();
  std::vector<std::string> names = {"n_num", "w_i_node", "o_label"};
  for (real_t r : rates.rates) {
    const std::string suffix_rate = fmt_rate(r);
    for (const char* dir : kDirections)
      for (const char* field : kBlockFields)
        names.push_back(std::string(field) + "_" + dir + "_" + suffix_rate);
  }
  return names;
}

std::size_t attack_feature_count(const RateSet& rates) {
  rates.validate();
  return 3 + 14 * rates.rates.size();
}

std::size_t attack_feature_index(const RateSet& rates, const std::string& name) {
  const auto names = attack_feature_names(rates);
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ArgumentError("no attack feature named '" + name + "'");
}

std::vector<real_t> extract_attack_features(LabelOracle& oracle, const Graph& view,
                                            std::uint32_t node, std::int32_t ground_truth,
                                            const std::vector<std::int32_t>& neighbor_truths,
                                            const RateSet& rates,
                                            std::pair<real_t, real_t> extrema,
                                            std::uint64_t seed) {
  rates.validate();
  if (node >= view.num_nodes) throw ArgumentError("extract: node out of range");
  if (extrema.first > extrema.second)
    throw ArgumentError("extract: extrema minimum exceeds maximum");
  const auto neigh = view.neighbors(node);
  const std::size_t n_num = neigh.size();
  if (neighbor_truths.size() != n_num)
    throw ArgumentError("extract: expected " + std::to_string(n_num) +
                        " neighbor truths, got " + std::to_string(neighbor_truths.size()));
  const std::size_t d = view.feature_dim;

  std::vector<real_t> out;
  out.reserve(attack_feature_count(rates));
  out.push_back(static_cast<real_t>(n_num));
  out.push_back(n_num == 0 ? real_t(1) : real_t(0));
  out.push_back(static_cast<real_t>(ground_truth));

  const real_t* orig = view.feature_row(node);
  const auto neighbor_accuracy = [&](const std::vector<std::int32_t>& preds) {
    if (n_num == 0) return real_t(0);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < n_num; ++j)
      if (preds[j + 1] == neighbor_truths[j]) ++correct;
    return static_cast<real_t>(correct) / static_cast<real_t>(n_num);
  };

  for (std::size_t ri = 0; ri < rates.rates.size(); ++ri) {
    for (std::size_t vi = 0; vi < 2; ++vi) {
      Rng rng(derive_seed(seed, ri, vi));

      // ceil(rate * d) mask positions; the epsilon guards against a product
      // like 0.2 * 35 landing one ulp above the exact integer.
      std::size_t k = static_cast<std::size_t>(
          std::ceil(static_cast<double>(rates.rates[ri]) * static_cast<double>(d) - 1e-9));
      k = std::min(std::max<std::size_t>(k, 1), d);
      const auto mask = rng.sample_indices(d, k);
      const real_t fill = vi == 0 ? extrema.second : extrema.first;
      std::vector<real_t> masked(orig, orig + d);
      std::size_t altered = 0;
      for (std::size_t p : mask) {
        if (masked[p] != fill) ++altered;
        masked[p] = fill;
      }
      const real_t change_p = static_cast<real_t>(altered) / static_cast<real_t>(d);

      SubgraphQuery lone;
      lone.center_features = masked;
      const bool i_none = oracle.query(lone)[0] == ground_truth;

      SubgraphQuery star;
      star.center_features = masked;
      star.neighbor_features.reserve(n_num);
      for (std::uint32_t v : neigh)
        star.neighbor_features.emplace_back(view.feature_row(v), view.feature_row(v) + d);
      star.edges.reserve(n_num);
      for (std::uint32_t j = 0; j < n_num; ++j) star.edges.emplace_back(0, j + 1);
      const auto full_preds = oracle.query(star);
      const bool i_all = full_preds[0] == ground_truth;
      const real_t n_acc_all = neighbor_accuracy(full_preds);

      // Drop the star's edges one at a time in random order; every neighbor
      // stays in the payload even after it is disconnected.
      std::vector<std::uint32_t> drop_order(n_num);
      std::iota(drop_order.begin(), drop_order.end(), 0u);
      rng.shuffle(drop_order);
      std::vector<std::uint8_t> dropped(n_num, 0);
      std::size_t center_correct = 0;
      real_t acc_sum = 0;
      real_t n_acc_none = 0;
      for (std::size_t s = 0; s < n_num; ++s) {
        dropped[drop_order[s]] = 1;
        star.edges.clear();
        for (std::uint32_t j = 0; j < n_num; ++j)
          if (!dropped[j]) star.edges.emplace_back(0, j + 1);
        const auto preds = oracle.query(star);
        if (preds[0] == ground_truth) ++center_correct;
        const real_t acc = neighbor_accuracy(preds);
        acc_sum += acc;
        if (s + 1 == n_num) n_acc_none = acc;
      }
      const real_t i_step = n_num > 0
                                ? static_cast<real_t>(center_correct) / static_cast<real_t>(n_num)
                                : (i_all ? real_t(1) : real_t(0));
      const real_t n_acc_avg = n_num > 0 ? acc_sum / static_cast<real_t>(n_num) : real_t(0);

      out.push_back(i_none ? real_t(1) : real_t(0));
      out.push_back(i_all ? real_t(1) : real_t(0));
      out.push_back(i_step);
      out.push_back(n_acc_all);
      out.push_back(n_acc_none);
      out.push_back(n_acc_avg);
      out.push_back(change_p);
    }
  }
  return out;
}

AttackDataset build_attack_dataset(LabelOracle& oracle, const Graph& view,
                                   const std::vector<std::uint32_t>& member_nodes,
                                   const std::vector<std::uint32_t>& nonmember_nodes,
                                   const std::vector<std::int32_t>& truths,
                                   const RateSet& rates, std::pair<real_t, real_t> extrema,
                                   std::uint64_t seed) {
  rates.validate();
  if (truths.size() != view.num_nodes)
    throw ArgumentError("attack dataset: truths must cover every node of the view");

  std::vector<std::uint32_t> all = member_nodes;
  all.insert(all.end(), nonmember_nodes.begin(), nonmember_nodes.end());
  for (std::uint32_t v : all)
    if (v >= view.num_nodes) throw ArgumentError("attack dataset: node id out of range");
  std::sort(all.begin(), all.end());
  for (std::size_t i = 1; i < all.size(); ++i)
    if (all[i] == all[i - 1])
      throw ArgumentError("attack dataset: node " + std::to_string(all[i]) +
                          " listed twice (sets must be disjoint)");

  AttackDataset ds;
  ds.rates = rates;
  ds.node_ids.reserve(member_nodes.size() + nonmember_nodes.size());
  ds.records.reserve(member_nodes.size() + nonmember_nodes.size());

  const auto extract_one = [&](std::uint32_t node, std::int32_t membership) {
    std::vector<std::int32_t> neighbor_truths;
    for (std::uint32_t v : view.neighbors(node)) neighbor_truths.push_back(truths[v]);
    AttackRecord rec;
    rec.features = extract_attack_features(oracle, view, node, truths[node], neighbor_truths,
                                           rates, extrema, derive_seed(seed, node));
    rec.membership = membership;
    ds.node_ids.push_back(node);
    ds.records.push_back(std::move(rec));
  };
  for (std::uint32_t v : member_nodes) extract_one(v, 1);
  for (std::uint32_t v : nonmember_nodes) extract_one(v, 0);
  return ds;
}

void save_attack_dataset(const AttackDataset& ds, const std::filesystem::path& path) {
  ds.rates.validate();
  if (ds.node_ids.size() != ds.records.size())
    throw ArgumentError("attack dataset: node id and record counts differ");
  const auto names = attack_feature_names(ds.rates);

  std::string out = "# ";
  out += kAttackSchemaVersion;
  out += "\nnode_id,membership";
  for (const auto& n : names) {
    out += ',';
    out += n;
  }
  out += '\n';
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const AttackRecord& rec = ds.records[i];
    if (rec.features.size() != names.size())
      throw ArgumentError("attack dataset: record " + std::to_string(i) +
                          " has the wrong feature count");
    out += std::to_string(ds.node_ids[i]);
    out += ',';
    out += std::to_string(rec.membership);
    for (real_t f : rec.features) {
      out += ',';
      out += fmt_real(static_cast<double>(f));
    }
    out += '\n';
  }
  textio::write_file_atomic(path, out);
}

AttackDataset load_attack_dataset(const std::filesystem::path& path) {
  const auto lines = textio::split_lines(textio::read_text_file(path));
  if (lines.size() < 2) throw FormatError("attack dataset: missing header");
  const std::string expected_comment = std::string("# ") + kAttackSchemaVersion;
  if (lines[0] != expected_comment)
    throw FormatError("attack dataset: expected schema line '" + expected_comment +
                      "', got '" + lines[0] + "'");

  const auto header = textio::split_on(lines[1], ',');
  if (header.size() < 3 || header[0] != "node_id" || header[1] != "membership")
    throw FormatError("attack dataset: header must start with node_id,membership");

  // The rate set is recovered from the i_none_max_* columns, then the whole
  // header is checked against the schema those rates imply.
  RateSet rates;
  const std::string probe = "i_none_max_";
  for (const auto& col : header)
    if (col.substr(0, probe.size()) == probe)
      rates.rates.push_back(static_cast<real_t>(
          textio::parse_number(col.substr(probe.size()), "attack dataset header")));
  try {
    rates.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("attack dataset: ") + e.what());
  }
  const auto names = attack_feature_names(rates);
  if (header.size() != names.size() + 2)
    throw FormatError("attack dataset: expected " + std::to_string(names.size() + 2) +
                      " columns, got " + std::to_string(header.size()));
  for (std::size_t i = 0; i < names.size(); ++i)
    if (header[i + 2] != names[i])
      throw FormatError("attack dataset: column " + std::to_string(i + 2) + " is '" +
                        std::string(header[i + 2]) + "', expected '" + names[i] + "'");

  AttackDataset ds;
  ds.rates = rates;
  for (std::size_t row = 2; row < lines.size(); ++row) {
    const std::string where = "attack dataset row " + std::to_string(row - 1);
    const auto fields = textio::split_on(lines[row], ',');
    if (fields.size() != header.size())
      throw FormatError(where + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    const std::int64_t id = textio::parse_int(fields[0], where);
    if (id < 0 || id > std::numeric_limits<std::uint32_t>::max())
      throw FormatError(where + ": node id out of range");
    const std::int64_t membership = textio::parse_int(fields[1], where);
    if (membership != 0 && membership != 1)
      throw FormatError(where + ": membership must be 0 or 1");
    AttackRecord rec;
    rec.membership = static_cast<std::int32_t>(membership);
    rec.features.reserve(names.size());
    for (std::size_t i = 2; i < fields.size(); ++i)
      rec.features.push_back(static_cast<real_t>(textio::parse_number(fields[i], where)));
    ds.node_ids.push_back(static_cast<std::uint32_t>(id));
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

IndexSplit stratified_split_indices(const std::vector<AttackRecord>& records,
                                    real_t train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0) || !(train_fraction < 1))
    throw ArgumentError("stratified split: train_fraction must lie in (0, 1)");
  std::vector<std::size_t> members, nonmembers;
  for (std::size_t i = 0; i < records.size(); ++i)
    (records[i].membership == 1 ? members : nonmembers).push_back(i);
  Rng rng(seed);
  rng.shuffle(members);
  rng.shuffle(nonmembers);
  IndexSplit out;
  const auto take = [&](std::vector<std::size_t>& pool) {
    const std::size_t n_train = static_cast<std::size_t>(
        static_cast<double>(train_fraction) * static_cast<double>(pool.size()));
    out.train.insert(out.train.end(), pool.begin(), pool.begin() + n_train);
    out.holdout.insert(out.holdout.end(), pool.begin() + n_train, pool.end());
  };
  take(members);
  take(nonmembers);
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.holdout.begin(), out.holdout.end());
  return out;
}

void AttackMlpConfig::validate() const {
  if (hidden_dim == 0) throw ArgumentError("attack mlp: hidden_dim must be positive");
  if (num_hidden_layers == 0)
    throw ArgumentError("attack mlp: num_hidden_layers must be positive");
  if (!(learning_rate >= real_t(0)) || !std::isfinite(static_cast<double>(learning_rate)))
    throw ArgumentError("attack mlp: learning_rate must be finite and non-negative");
  if (epochs == 0) throw ArgumentError("attack mlp: epochs must be positive");
  if (batch_size == 0) throw ArgumentError("attack mlp: batch_size must be positive");
}

std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::TrainAcc: return "train_acc";
    case SelectionStrategy::TestAcc: return "test_acc";
    case SelectionStrategy::TrainLoss: return "train_loss";
    case SelectionStrategy::TestLoss: return "test_loss";
    case SelectionStrategy::EvaluateAcc: return "evaluate_acc";
  }
  throw ArgumentError("bad selection strategy value");
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
  if (s == "train_acc") return SelectionStrategy::TrainAcc;
  if (s == "test_acc") return SelectionStrategy::TestAcc;
  if (s == "train_loss") return SelectionStrategy::TrainLoss;
  if (s == "test_loss") return SelectionStrategy::TestLoss;
  if (s == "evaluate_acc") return SelectionStrategy::EvaluateAcc;
  throw ArgumentError("unknown selection strategy '" + s + "'");
}

namespace {

void check_record_dims(const std::vector<AttackRecord>& records, std::size_t dim,
                       const std::string& what) {
  for (const AttackRecord& r : records) {
    if (r.features.size() != dim)
      throw ArgumentError(what + ": inconsistent feature length");
    if (r.membership != 0 && r.membership != 1)
      throw ArgumentError(what + ": membership must be 0 or 1");
  }
}

/// x -> (x - mean) / std columnwise; constant columns keep mean 0, std 1 so
/// the transform is the identity for them.
Tensor standardized_matrix(const std::vector<AttackRecord>& records,
                           const std::vector<real_t>& mean, const std::vector<real_t>& std_dev) {
  const std::size_t n = records.size(), d = mean.size();
  Tensor x = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x.values[i * d + j] = (records[i].features[j] - mean[j]) / std_dev[j];
  return x;
}

std::vector<real_t> membership_targets(const std::vector<AttackRecord>& records) {
  std::vector<real_t> t(records.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    t[i] = static_cast<real_t>(records[i].membership);
  return t;
}

/// Inference-mode logits for the attack MLP, one column.
std::vector<real_t> mlp_logits(const std::vector<Tensor>& params, const Tensor& x) {
  const std::size_t n = x.rows();
  std::vector<real_t> cur(x.values);
  std::size_t cur_dim = x.cols();
  for (std::size_t l = 0; l * 2 < params.size(); ++l) {
    const Tensor& w = params[l * 2];
    const Tensor& b = params[l * 2 + 1];
    const std::size_t out_dim = w.cols();
    const bool last = (l * 2 + 2 == params.size());
    std::vector<real_t> next(n * out_dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < out_dim; ++j) {
        real_t acc = b.values[j];
        for (std::size_t kk = 0; kk < cur_dim; ++kk)
          acc += cur[i * cur_dim + kk] * w.values[kk * out_dim + j];
        next[i * out_dim + j] = (!last && acc < real_t(0)) ? real_t(0) : acc;
      }
    }
    cur = std::move(next);
    cur_dim = out_dim;
  }
  return cur;  // [n x 1]
}

struct EvalResult {
  real_t loss = 0;
  real_t acc = 0;
};

/// Mean stable BCE and threshold-0.5 accuracy (logit >= 0 predicts member).
EvalResult evaluate_mlp(const std::vector<Tensor>& params, const Tensor& x,
                        const std::vector<real_t>& targets) {
  const auto logits = mlp_logits(params, x);
  EvalResult r;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = static_cast<double>(logits[i]);
    const double y = static_cast<double>(targets[i]);
    r.loss += static_cast<real_t>(std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
    if ((z >= 0.0 ? 1.0 : 0.0) == y) r.acc += real_t(1);
  }
  const real_t n = static_cast<real_t>(logits.size());
  r.loss /= n;
  r.acc /= n;
  return r;
}

real_t selection_value(const EpochMetrics& m, SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::TrainAcc: return m.train_acc;
    case SelectionStrategy::TestAcc: return m.test_acc;
    case SelectionStrategy::TrainLoss: return -m.train_loss;
    case SelectionStrategy::TestLoss: return -m.test_loss;
    case SelectionStrategy::EvaluateAcc: return m.evaluate_acc;
  }
  throw ArgumentError("bad selection strategy value");
}

}  // namespace

AttackModel train_attack_model(const std::vector<AttackRecord>& train,
                               const std::vector<AttackRecord>& holdout,
                               const AttackMlpConfig& config, SelectionStrategy selection,
                               const std::vector<AttackRecord>* evaluation) {
  config.validate();
  if (train.empty()) throw ArgumentError("attack training: empty train list");
  const std::size_t d = train.front().features.size();
  if (d == 0) throw ArgumentError("attack training: empty feature vectors");
  check_record_dims(train, d, "attack training");
  check_record_dims(holdout, d, "attack holdout");
  std::size_t members = 0;
  for (const AttackRecord& r : train) members += static_cast<std::size_t>(r.membership);
  if (members == 0 || members == train.size())
    throw ArgumentError("attack training: train list has a single class");
  if (holdout.empty() &&
      (selection == SelectionStrategy::TestAcc || selection == SelectionStrategy::TestLoss))
    throw ArgumentError("attack training: selection '" + to_string(selection) +
                        "' needs a non-empty holdout list");
  if (selection == SelectionStrategy::EvaluateAcc && (!evaluation || evaluation->empty()))
    throw ArgumentError(
        "attack training: selection 'evaluate_acc' needs an oracle evaluation list");
  if (evaluation) check_record_dims(*evaluation, d, "attack evaluation");

  AttackModel model;
  model.config = config;
  model.input_dim = d;
  model.selection = selection;
  model.oracle_only = selection == SelectionStrategy::EvaluateAcc;

  // Train-set standardization statistics (population variance). Columns
  // that never vary are left untouched rather than divided by ~0.
  model.col_mean.assign(d, real_t(0));
  model.col_std.assign(d, real_t(1));
  const real_t n_train = static_cast<real_t>(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    real_t mean = 0;
    for (const AttackRecord& r : train) mean += r.features[j];
    mean /= n_train;
    real_t var = 0;
    for (const AttackRecord& r : train) {
      const real_t dvj = r.features[j] - mean;
      var += dvj * dvj;
    }
    const real_t sd = std::sqrt(var / n_train);
    if (sd > real_t(1e-12)) {
      model.col_mean[j] = mean;
      model.col_std[j] = sd;
    }
  }

  const Tensor train_x = standardized_matrix(train, model.col_mean, model.col_std);
  const std::vector<real_t> train_y = membership_targets(train);
  const Tensor holdout_x = standardized_matrix(holdout, model.col_mean, model.col_std);
  const std::vector<real_t> holdout_y = membership_targets(holdout);
  Tensor eval_x;
  std::vector<real_t> eval_y;
  if (evaluation && !evaluation->empty()) {
    eval_x = standardized_matrix(*evaluation, model.col_mean, model.col_std);
    eval_y = membership_targets(*evaluation);
  }

  Rng init_rng(derive_seed(config.seed, 0));
  const auto add_param = [&](const std::string& name, Tensor t) {
    model.param_names.push_back(name);
    model.params.push_back(std::move(t));
  };
  std::size_t in_dim = d;
  for (std::size_t l = 0; l < config.num_hidden_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_param(p + "weight", glorot_uniform(in_dim, config.hidden_dim, init_rng));
    add_param(p + "bias", Tensor::zeros({config.hidden_dim}));
    in_dim = config.hidden_dim;
  }
  add_param("out.weight", glorot_uniform(in_dim, 1, init_rng));
  add_param("out.bias", Tensor::zeros({1}));

  std::vector<Tensor*> params;
  for (Tensor& p : model.params) params.push_back(&p);
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.reset(params);

  Rng batch_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  std::vector<std::vector<real_t>> best_values;
  real_t best_value = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      Tensor bx = Tensor::zeros({stop - start, d});
      std::vector<real_t> by(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t src = order[i];
        std::copy(train_x.values.begin() + static_cast<std::ptrdiff_t>(src * d),
                  train_x.values.begin() + static_cast<std::ptrdiff_t>((src + 1) * d),
                  bx.values.begin() + static_cast<std::ptrdiff_t>((i - start) * d));
        by[i - start] = train_y[src];
      }

      Tape tape;
      Tape::Id h = tape.input(std::move(bx), "batch");
      for (std::size_t l = 0; l * 2 < model.params.size(); ++l) {
        Tape::Id w = tape.param(model.params[l * 2], model.param_names[l * 2]);
        Tape::Id b = tape.param(model.params[l * 2 + 1], model.param_names[l * 2 + 1]);
        h = tape.add_rowvec(tape.matmul(h, w), b);
        if (l * 2 + 2 < model.params.size()) h = tape.relu(h);
      }
      Tape::Id loss = tape.bce_with_logits(h, std::move(by));
      zero_grads(params);
      try {
        tape.backward(loss);
        adam.step(params);
      } catch (const NumericError& e) {
        throw NumericError("attack training: epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    const EvalResult tr = evaluate_mlp(model.params, train_x, train_y);
    m.train_loss = tr.loss;
    m.train_acc = tr.acc;
    if (!holdout.empty()) {
      const EvalResult te = evaluate_mlp(model.params, holdout_x, holdout_y);
      m.test_loss = te.loss;
      m.test_acc = te.acc;
    }
    if (!eval_y.empty()) {
      m.has_evaluate_acc = true;
      m.evaluate_acc = evaluate_mlp(model.params, eval_x, eval_y).acc;
    }
    model.trace.push_back(m);

    const real_t value = selection_value(m, selection);
    if (epoch == 1 || value > best_value) {
      best_value = value;
      model.chosen_epoch = epoch;
      best_values.clear();
      for (const Tensor& p : model.params) best_values.push_back(p.values);
    }
  }

  for (std::size_t i = 0; i < model.params.size(); ++i)
    model.params[i].values = best_values[i];
  return model;
}

std::vector<real_t> attack_scores(const AttackModel& model,
                                  const std::vector<AttackRecord>& records) {
  if (model.params.empty()) throw ArgumentError("attack scores: untrained model");
  check_record_dims(records, model.input_dim, "attack scoring");
  const Tensor x = standardized_matrix(records, model.col_mean, model.col_std);
  const auto logits = mlp_logits(model.params, x);
  std::vector<real_t> scores(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = static_cast<double>(logits[i]);
    scores[i] = static_cast<real_t>(z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                           : std::exp(z) / (1.0 + std::exp(z)));
  }
  return scores;
}

void save_attack_model(const AttackModel& model, const std::filesystem::path& path) {
  ordered_json j;
  j["version"] = "attack-mlp-v1";
  j["config"] = {{"hidden_dim", model.config.hidden_dim},
                 {"num_hidden_layers", model.config.num_hidden_layers},
                 {"learning_rate", static_cast<double>(model.config.learning_rate)},
                 {"epochs", model.config.epochs},
                 {"batch_size", model.config.batch_size},
                 {"seed", model.config.seed}};
  j["selection"] = to_string(model.selection);
  j["chosen_epoch"] = model.chosen_epoch;
  j["oracle_only"] = model.oracle_only;
  j["input_dim"] = model.input_dim;
  j["col_mean"] = model.col_mean;
  j["col_std"] = model.col_std;
  ordered_json params = ordered_json::array();
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    params.push_back({{"name", model.param_names[i]},
                      {"shape", model.params[i].shape},
                      {"values", model.params[i].values}});
  }
  j["params"] = std::move(params);
  ordered_json trace = ordered_json::array();
  for (const EpochMetrics& m : model.trace) {
    ordered_json e = {{"epoch", m.epoch},
                      {"train_loss", static_cast<double>(m.train_loss)},
                      {"train_acc", static_cast<double>(m.train_acc)},
                      {"test_loss", static_cast<double>(m.test_loss)},
                      {"test_acc", static_cast<double>(m.test_acc)}};
    if (m.has_evaluate_acc) e["evaluate_acc"] = static_cast<double>(m.evaluate_acc);
    trace.push_back(std::move(e));
  }
  j["trace"] = std::move(trace);
  textio::write_file_atomic(path, j.dump(2) + "\n");
}

AttackModel load_attack_model(const std::filesystem::path& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(textio::read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("attack model: " + std::string(e.what()));
  }
  try {
    reject_unknown_keys(j,
                        {"version", "config", "selection", "chosen_epoch", "oracle_only",
                         "input_dim", "col_mean", "col_std", "params", "trace"},
                        "attack model");
    const auto version = require_field<std::string>(j, "version", "attack model");
    if (version != "attack-mlp-v1")
      throw FormatError("attack model: unsupported version '" + version + "'");

    AttackModel m;
    const ordered_json& c = j.at("config");
    reject_unknown_keys(c,
                        {"hidden_dim", "num_hidden_layers", "learning_rate", "epochs",
                         "batch_size", "seed"},
                        "attack model config");
    m.config.hidden_dim = require_field<std::size_t>(c, "hidden_dim", "attack model config");
    m.config.num_hidden_layers =
        require_field<std::size_t>(c, "num_hidden_layers", "attack model config");
    m.config.learning_rate = static_cast<real_t>(
        require_field<double>(c, "learning_rate", "attack model config"));
    m.config.epochs = require_field<std::size_t>(c, "epochs", "attack model config");
    m.config.batch_size = require_field<std::size_t>(c, "batch_size", "attack model config");
    m.config.seed = require_field<std::uint64_t>(c, "seed", "attack model config");

    m.selection = selection_strategy_from_string(
        require_field<std::string>(j, "selection", "attack model"));
    m.chosen_epoch = require_field<std::size_t>(j, "chosen_epoch", "attack model");
    m.oracle_only = require_field<bool>(j, "oracle_only", "attack model");
    m.input_dim = require_field<std::size_t>(j, "input_dim", "attack model");
    m.col_mean = require_field<std::vector<real_t>>(j, "col_mean", "attack model");
    m.col_std = require_field<std::vector<real_t>>(j, "col_std", "attack model");
    if (m.col_mean.size() != m.input_dim || m.col_std.size() != m.input_dim)
      throw FormatError("attack model: standardization length mismatch");

    for (const ordered_json& p : j.at("params")) {
      reject_unknown_keys(p, {"name", "shape", "values"}, "attack model param");
      Tensor t;
      t.shape = require_field<std::vector<std::size_t>>(p, "shape", "attack model param");
      t.values = require_field<std::vector<real_t>>(p, "values", "attack model param");
      std::size_t n = 1;
      for (std::size_t s : t.shape) n *= s;
      if (n != t.values.size())
        throw FormatError("attack model: param shape does not match value count");
      m.param_names.push_back(require_field<std::string>(p, "name", "attack model param"));
      m.params.push_back(std::move(t));
    }
    if (m.params.empty() || m.params.size() % 2 != 0)
      throw FormatError("attack model: expected weight/bias parameter pairs");

    for (const ordered_json& e : j.at("trace")) {
      reject_unknown_keys(
          e, {"epoch", "train_loss", "train_acc", "test_loss", "test_acc", "evaluate_acc"},
          "attack model trace");
      EpochMetrics m2;
      m2.epoch = require_field<std::size_t>(e, "epoch", "attack model trace");
      m2.train_loss =
          static_cast<real_t>(require_field<double>(e, "train_loss", "attack model trace"));
      m2.train_acc =
          static_cast<real_t>(require_field<double>(e, "train_acc", "attack model trace"));
      m2.test_loss =
          static_cast<real_t>(require_field<double>(e, "test_loss", "attack model trace"));
      m2.test_acc =
          static_cast<real_t>(require_field<double>(e, "test_acc", "attack model trace"));
      if (e.contains("evaluate_acc")) {
        m2.has_evaluate_acc = true;
        m2.evaluate_acc = static_cast<real_t>(
            require_field<double>(e, "evaluate_acc", "attack model trace"));
      }
      m.trace.push_back(m2);
    }
    return m;
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
}

std::string to_string(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::Hop0: return "hop0";
    case BaselineVariant::Hop2: return "hop2";
    case BaselineVariant::Combined: return "combined";
    case BaselineVariant::AllProb: return "all_prob";
  }
  throw ArgumentError("bad baseline variant value");
}

BaselineVariant baseline_variant_from_string(const std::string& s) {
  if (s == "hop0") return BaselineVariant::Hop0;
  if (s == "hop2") return BaselineVariant::Hop2;
  if (s == "combined") return BaselineVariant::Combined;
  if (s == "all_prob") return BaselineVariant::AllProb;
  throw ArgumentError("unknown baseline variant '" + s + "'");
}

namespace {

std::vector<real_t> top_two(std::vector<real_t> row) {
  if (row.size() < 2) throw ArgumentError("baseline: need at least two classes");
  std::partial_sort(row.begin(), row.begin() + 2, row.end(), std::greater<real_t>());
  return {row[0], row[1]};
}

std::vector<real_t> hop0_features(PosteriorOracle& oracle, const Graph& view,
                                  std::uint32_t node) {
  SubgraphQuery q;
  q.center_features.assign(view.feature_row(node), view.feature_row(node) + view.feature_dim);
  return top_two(oracle.query(q)[0]);
}

std::vector<real_t> hop2_features(PosteriorOracle& oracle, const Graph& view,
                                  std::uint32_t node) {
  std::vector<std::uint32_t> nodes = khop_neighbors(view, node, 2);
  nodes.push_back(node);
  const InducedSubgraph sub = induced_subgraph(view, nodes);
  const auto local = static_cast<std::uint32_t>(sub.old_to_new[node]);
  return top_two(oracle.query_graph(sub.graph, {local})[0]);
}

}  // namespace

std::vector<real_t> baseline_features(PosteriorOracle& oracle, const Graph& view,
                                      std::uint32_t node, BaselineVariant variant) {
  if (node >= view.num_nodes) throw ArgumentError("baseline: node out of range");
  switch (variant) {
    case BaselineVariant::Hop0: return hop0_features(oracle, view, node);
    case BaselineVariant::Hop2: return hop2_features(oracle, view, node);
    case BaselineVariant::Combined: {
      std::vector<real_t> f = hop0_features(oracle, view, node);
      const std::vector<real_t> g = hop2_features(oracle, view, node);
      f.insert(f.end(), g.begin(), g.end());
      return f;
    }
    case BaselineVariant::AllProb: return oracle.query_graph(view, {node})[0];
  }
  throw ArgumentError("bad baseline variant value");
}

}  // namespace lmia
