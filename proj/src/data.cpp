#include "labelmia/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "labelmia/json_util.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;

namespace lmia {

std::string to_string(FeatureEncoding e) {
  return e == FeatureEncoding::BinaryF32 ? "binary_f32" : "csv";
}

FeatureEncoding feature_encoding_from_string(const std::string& s) {
  if (s == "binary_f32") return FeatureEncoding::BinaryF32;
  if (s == "csv") return FeatureEncoding::Csv;
  throw ArgumentError("unknown feature encoding '" + s + "'");
}

std::string to_string(SamplingMethod m) {
  switch (m) {
    case SamplingMethod::Random: return "random";
    case SamplingMethod::Balanced: return "balanced";
    case SamplingMethod::PartiallyBalanced: return "partially_balanced";
  }
  throw ArgumentError("bad sampling method value");
}

SamplingMethod sampling_method_from_string(const std::string& s) {
  if (s == "random") return SamplingMethod::Random;
  if (s == "balanced") return SamplingMethod::Balanced;
  if (s == "partially_balanced") return SamplingMethod::PartiallyBalanced;
  throw ArgumentError("unknown sampling method '" + s + "'");
}

namespace {

using textio::parse_int;
using textio::parse_number;
using textio::read_text_file;
using textio::split_lines;
using textio::split_on;

float f32_from_le(const unsigned char* b) {
  std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
                       std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void f32_to_le(float f, unsigned char* b) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  b[0] = static_cast<unsigned char>(bits & 0xff);
  b[1] = static_cast<unsigned char>((bits >> 8) & 0xff);
  b[2] = static_cast<unsigned char>((bits >> 16) & 0xff);
  b[3] = static_cast<unsigned char>((bits >> 24) & 0xff);
}

}  // namespace

Graph load_bundle(const std::string& path) {
  const fs::path dir(path);
  if (!fs::is_directory(dir)) throw FormatError("bundle directory not found: " + path);

  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  std::size_t num_nodes, num_classes, feature_dim;
  FeatureEncoding encoding;
  try {
    reject_unknown_keys(manifest,
                        {"version", "num_nodes", "num_classes", "feature_dim",
                         "feature_encoding"},
                        "manifest.json");
    const auto version = require_field<std::int64_t>(manifest, "version", "manifest.json");
    if (version != 1)
      throw FormatError("manifest.json: unsupported version " + std::to_string(version));
    num_nodes = require_field<std::size_t>(manifest, "num_nodes", "manifest.json");
    num_classes = require_field<std::size_t>(manifest, "num_classes", "manifest.json");
    feature_dim = require_field<std::size_t>(manifest, "feature_dim", "manifest.json");
    encoding = feature_encoding_from_string(
        require_field<std::string>(manifest, "feature_encoding", "manifest.json"));
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  if (num_nodes == 0) throw FormatError("manifest.json: num_nodes must be positive");

  std::vector<std::int32_t> labels;
  {
    const auto lines = split_lines(read_text_file(dir / "labels.tsv"));
    if (lines.size() != num_nodes)
      throw FormatError("labels.tsv: expected " + std::to_string(num_nodes) + " rows, got " +
                        std::to_string(lines.size()));
    labels.reserve(num_nodes);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "labels.tsv row " + std::to_string(i + 1);
      const std::int64_t y = parse_int(lines[i], where);
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
        throw FormatError(where + ": label " + std::to_string(y) + " out of range");
      labels.push_back(static_cast<std::int32_t>(y));
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  {
    const auto lines = split_lines(read_text_file(dir / "edges.tsv"));
    edges.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "edges.tsv row " + std::to_string(i + 1);
      const auto fields = split_on(lines[i], '\t');
      if (fields.size() != 2) throw FormatError(where + ": expected two fields");
      const std::int64_t u = parse_int(fields[0], where);
      const std::int64_t v = parse_int(fields[1], where);
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= num_nodes ||
          static_cast<std::size_t>(v) >= num_nodes)
        throw FormatError(where + ": endpoint out of range");
      edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
    }
  }

  std::vector<real_t> features(num_nodes * feature_dim);
  if (encoding == FeatureEncoding::BinaryF32) {
    const std::string blob = read_text_file(dir / "features.bin");
    const std::size_t expected = 4 * num_nodes * feature_dim;
    if (blob.size() != expected)
      throw FormatError("features.bin: expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(blob.size()));
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    for (std::size_t i = 0; i < features.size(); ++i)
      features[i] = static_cast<real_t>(f32_from_le(bytes + 4 * i));
  } else {
    const auto lines = split_lines(read_text_file(dir / "features.csv"));
    if (lines.size() != num_nodes)
      throw FormatError("features.csv: expected " + std::to_string(num_nodes) + " rows, got " +
                        std::to_string(lines.size()));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string where = "features.csv row " + std::to_string(i + 1);
      const auto fields = split_on(lines[i], ',');
      if (fields.size() != feature_dim)
        throw FormatError(where + ": expected " + std::to_string(feature_dim) +
                          " fields, got " + std::to_string(fields.size()));
      for (std::size_t j = 0; j < feature_dim; ++j)
        features[i * feature_dim + j] = static_cast<real_t>(parse_number(fields[j], where));
    }
  }

  return Graph::from_edge_list(num_nodes, num_classes, feature_dim, std::move(features),
                               std::move(labels), edges);
}

void save_bundle(const Graph& g, const std::string& path, FeatureEncoding encoding) {
  const fs::path dir(path);
  fs::create_directories(dir);

  {
    ordered_json manifest;
    manifest["version"] = 1;
    manifest["num_nodes"] = g.num_nodes;
    manifest["num_classes"] = g.num_classes;
    manifest["feature_dim"] = g.feature_dim;
    manifest["feature_encoding"] = to_string(encoding);
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "edges.tsv", std::ios::binary);
    for (std::uint32_t u = 0; u < g.num_nodes; ++u)
      for (std::uint32_t v : g.neighbors(u))
        if (u < v) out << u << "\t" << v << "\n";
  }
  {
    std::ofstream out(dir / "labels.tsv", std::ios::binary);
    for (std::int32_t y : g.labels) out << y << "\n";
  }
  if (encoding == FeatureEncoding::BinaryF32) {
    std::vector<unsigned char> blob(4 * g.features.size());
    for (std::size_t i = 0; i < g.features.size(); ++i)
      f32_to_le(static_cast<float>(g.features[i]), blob.data() + 4 * i);
    std::ofstream out(dir / "features.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size()));
  } else {
    std::ofstream out(dir / "features.csv", std::ios::binary);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      for (std::size_t j = 0; j < g.feature_dim; ++j) {
        if (j) out << ",";
        out << fmt_real(static_cast<double>(g.features[i * g.feature_dim + j]));
      }
      out << "\n";
    }
  }
}

namespace {

// Deterministic per-class sign pattern over feature dimensions.
int mean_sign(std::size_t cls, std::size_t dim) {
  return (splitmix64((static_cast<std::uint64_t>(cls) << 32) | dim) & 1) ? 1 : -1;
}

}  // namespace

Graph generate_sbm(const SbmConfig& cfg) {
  if (cfg.num_classes < 2) throw ArgumentError("generate_sbm: need at least two classes");
  if (cfg.num_nodes < cfg.num_classes)
    throw ArgumentError("generate_sbm: fewer nodes than classes");
  if (cfg.feature_dim == 0) throw ArgumentError("generate_sbm: feature_dim must be positive");
  if (!(cfg.inter_edge_prob >= 0 && cfg.inter_edge_prob <= cfg.intra_edge_prob &&
        cfg.intra_edge_prob <= 1))
    throw ArgumentError("generate_sbm: need 0 <= inter_edge_prob <= intra_edge_prob <= 1");
  if (!(cfg.feature_signal >= 0)) throw ArgumentError("generate_sbm: negative feature_signal");

  std::vector<std::int32_t> labels(cfg.num_nodes);
  for (std::size_t i = 0; i < cfg.num_nodes; ++i)
    labels[i] = static_cast<std::int32_t>(i % cfg.num_classes);

  Rng edge_rng(derive_seed(cfg.seed, 0));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint32_t i = 0; i < cfg.num_nodes; ++i) {
    for (std::uint32_t j = i + 1; j < cfg.num_nodes; ++j) {
      const real_t p = labels[i] == labels[j] ? cfg.intra_edge_prob : cfg.inter_edge_prob;
      if (edge_rng.uniform() < p) edges.emplace_back(i, j);
    }
  }

  Rng feat_rng(derive_seed(cfg.seed, 1));
  const real_t offset = real_t(0.5) * cfg.feature_signal * kSbmNoiseSigma;
  std::vector<real_t> features(cfg.num_nodes * cfg.feature_dim);
  for (std::size_t i = 0; i < cfg.num_nodes; ++i) {
    const auto cls = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
      double v = 0.5 + mean_sign(cls, j) * offset + kSbmNoiseSigma * feat_rng.normal();
      v = std::clamp(v, 0.0, 1.0);
      // snap to f32 so binary bundle round-trips are bitwise
      features[i * cfg.feature_dim + j] = static_cast<real_t>(static_cast<float>(v));
    }
  }

  return Graph::from_edge_list(cfg.num_nodes, cfg.num_classes, cfg.feature_dim,
                               std::move(features), std::move(labels), edges);
}

std::pair<real_t, real_t> feature_extrema(const Graph& g) {
  if (g.features.empty()) throw ArgumentError("feature_extrema: empty feature matrix");
  auto [lo, hi] = std::minmax_element(g.features.begin(), g.features.end());
  return {*lo, *hi};
}

const std::vector<std::uint32_t>& DatasetSplit::set(std::size_t i) const {
  switch (i) {
    case 0: return target_train;
    case 1: return target_test;
    case 2: return shadow_train;
    case 3: return shadow_test;
  }
  throw ArgumentError("DatasetSplit::set: index out of range");
}

namespace {

std::vector<std::vector<std::uint32_t>> nodes_by_class(const Graph& g) {
  std::vector<std::vector<std::uint32_t>> by_class(g.num_classes);
  for (std::uint32_t v = 0; v < g.num_nodes; ++v)
    by_class[static_cast<std::size_t>(g.labels[v])].push_back(v);
  return by_class;
}

std::size_t min_class_count(const std::vector<std::vector<std::uint32_t>>& by_class) {
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& c : by_class) m = std::min(m, c.size());
  return m;
}

void sort_sets(DatasetSplit& s) {
  std::sort(s.target_train.begin(), s.target_train.end());
  std::sort(s.target_test.begin(), s.target_test.end());
  std::sort(s.shadow_train.begin(), s.shadow_train.end());
  std::sort(s.shadow_test.begin(), s.shadow_test.end());
}

}  // namespace

DatasetSplit sample_split(const Graph& g, SamplingMethod method, const SplitSizes& sizes,
                          std::uint64_t seed) {
  DatasetSplit split;
  split.method = method;
  split.seed = seed;
  Rng rng(derive_seed(seed, 0));
  std::vector<std::uint32_t>* sets[4] = {&split.target_train, &split.target_test,
                                         &split.shadow_train, &split.shadow_test};

  if (method == SamplingMethod::Random) {
    if (sizes.per_class || sizes.test_size)
      throw ArgumentError("sample_split: the random method takes no size overrides");
    std::vector<std::uint32_t> nodes(g.num_nodes);
    for (std::uint32_t v = 0; v < g.num_nodes; ++v) nodes[v] = v;
    rng.shuffle(nodes);
    const std::size_t base = g.num_nodes / 4, rem = g.num_nodes % 4;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t take = base + (k < rem ? 1 : 0);
      sets[k]->assign(nodes.begin() + pos, nodes.begin() + pos + take);
      pos += take;
    }
  } else if (method == SamplingMethod::Balanced) {
    if (sizes.test_size)
      throw ArgumentError("sample_split: test_size applies only to partially_balanced");
    auto by_class = nodes_by_class(g);
    const std::size_t m = sizes.per_class ? *sizes.per_class : min_class_count(by_class) / 4;
    if (m == 0) throw ArgumentError("sample_split: balanced per-class count is zero");
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (by_class[c].size() < 4 * m)
        throw ArgumentError("sample_split: class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " nodes, needs " +
                            std::to_string(4 * m));
      rng.shuffle(by_class[c]);
      for (std::size_t k = 0; k < 4; ++k)
        sets[k]->insert(sets[k]->end(), by_class[c].begin() + k * m,
                        by_class[c].begin() + (k + 1) * m);
    }
  } else {
    auto by_class = nodes_by_class(g);
    const std::size_t num_classes = by_class.size();
    std::size_t m_train;
    if (sizes.per_class) {
      m_train = *sizes.per_class;
    } else {
      m_train = static_cast<std::size_t>(double(min_class_count(by_class)) * 0.45);
      m_train = std::min(m_train, g.num_nodes / (4 * num_classes));
    }
    if (m_train == 0) throw ArgumentError("sample_split: per-class train count is zero");
    const std::size_t test_size = sizes.test_size ? *sizes.test_size : m_train * num_classes;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (by_class[c].size() < 2 * m_train)
        throw ArgumentError("sample_split: class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " nodes, needs " +
                            std::to_string(2 * m_train));
      rng.shuffle(by_class[c]);
      split.target_train.insert(split.target_train.end(), by_class[c].begin(),
                                by_class[c].begin() + m_train);
      split.shadow_train.insert(split.shadow_train.end(), by_class[c].begin() + m_train,
                                by_class[c].begin() + 2 * m_train);
    }
    std::vector<std::uint32_t> pool;
    for (std::size_t c = 0; c < num_classes; ++c)
      pool.insert(pool.end(), by_class[c].begin() + 2 * m_train, by_class[c].end());
    std::sort(pool.begin(), pool.end());
    if (pool.size() < 2 * test_size)
      throw ArgumentError("sample_split: remainder holds " + std::to_string(pool.size()) +
                          " nodes, test sets need " + std::to_string(2 * test_size));
    rng.shuffle(pool);
    split.target_test.assign(pool.begin(), pool.begin() + test_size);
    split.shadow_test.assign(pool.begin() + test_size, pool.begin() + 2 * test_size);
  }

  sort_sets(split);
  return split;
}

namespace {

constexpr const char* kSplitVersion = "split-v1";
constexpr const char* kSetNames[4] = {"target_train", "target_test", "shadow_train",
                                      "shadow_test"};

}  // namespace

void save_split(const DatasetSplit& split, const fs::path& path) {
  ordered_json j;
  j["version"] = kSplitVersion;
  j["method"] = to_string(split.method);
  j["seed"] = split.seed;
  const std::vector<std::uint32_t>* sets[4] = {&split.target_train, &split.target_test,
                                               &split.shadow_train, &split.shadow_test};
  for (std::size_t i = 0; i < 4; ++i) j[kSetNames[i]] = *sets[i];
  textio::write_file_atomic(path, j.dump(2) + "\n");
}

DatasetSplit load_split(const fs::path& path, std::size_t num_nodes) {
  const std::string text = textio::read_text_file(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("split file " + path.string() + ": " + std::string(e.what()));
  }
  DatasetSplit split;
  try {
    reject_unknown_keys(j,
                        {"version", "method", "seed", "target_train", "target_test",
                         "shadow_train", "shadow_test"},
                        "split file");
    const std::string version = require_field<std::string>(j, "version", "split file");
    if (version != kSplitVersion)
      throw FormatError("split file: unsupported version '" + version + "'");
    split.method =
        sampling_method_from_string(require_field<std::string>(j, "method", "split file"));
    split.seed = require_field<std::uint64_t>(j, "seed", "split file");
    std::vector<std::uint32_t>* sets[4] = {&split.target_train, &split.target_test,
                                           &split.shadow_train, &split.shadow_test};
    for (std::size_t i = 0; i < 4; ++i)
      *sets[i] = require_field<std::vector<std::uint32_t>>(j, kSetNames[i], "split file");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!std::is_sorted(sets[i]->begin(), sets[i]->end()) ||
          std::adjacent_find(sets[i]->begin(), sets[i]->end()) != sets[i]->end())
        throw FormatError(std::string("split file: ") + kSetNames[i] +
                          " must be sorted and duplicate-free");
      if (num_nodes > 0)
        for (std::uint32_t v : *sets[i])
          if (v >= num_nodes)
            throw FormatError(std::string("split file: ") + kSetNames[i] + " node " +
                              std::to_string(v) + " out of range for " +
                              std::to_string(num_nodes) + " nodes");
    }
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) {
        std::vector<std::uint32_t> common;
        std::set_intersection(sets[a]->begin(), sets[a]->end(), sets[b]->begin(),
                              sets[b]->end(), std::back_inserter(common));
        if (!common.empty())
          throw FormatError(std::string("split file: ") + kSetNames[a] + " and " +
                            kSetNames[b] + " share node " + std::to_string(common.front()));
      }
  } catch (const ArgumentError& e) {
    throw FormatError(std::string(e.what()));
  }
  return split;
}

}  // namespace lmia
