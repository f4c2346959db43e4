#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "labelmia/common.hpp"
#include "labelmia/graph.hpp"

namespace lmia {

enum class FeatureEncoding { BinaryF32, Csv };

std::string to_string(FeatureEncoding e);
FeatureEncoding feature_encoding_from_string(const std::string& s);

/// Loads a bundle directory (manifest.json, edges.tsv, labels.tsv,
/// features.bin or features.csv). Edge lists are symmetrized and
/// deduplicated. Malformed content raises FormatError naming the file and,
/// where it applies, the row.
Graph load_bundle(const std::string& path);

/// Writes a bundle directory. Binary encoding stores features as little-endian
/// 32-bit floats, so a load after save is bitwise-exact only when the values
/// already are 32-bit (generated graphs and binary-loaded bundles are).
void save_bundle(const Graph& g, const std::string& path,
                 FeatureEncoding encoding = FeatureEncoding::BinaryF32);

/// Stochastic block model stand-in for the citation datasets. Classes go
/// round-robin over nodes; an edge between two nodes appears with
/// intra_edge_prob inside a class and inter_edge_prob across classes.
/// Features are Gaussian around a per-class mean pattern whose entries sit
/// feature_signal noise-sigmas apart, clipped to [0, 1].
struct SbmConfig {
  std::size_t num_nodes = 800;
  std::size_t num_classes = 4;
  real_t intra_edge_prob = real_t(0.05);
  real_t inter_edge_prob = real_t(0.005);
  std::size_t feature_dim = 32;
  real_t feature_signal = real_t(1.5);
  std::uint64_t seed = 0;
};

/// Feature noise scale for generate_sbm; feature_signal is expressed in
/// multiples of this.
inline constexpr real_t kSbmNoiseSigma = real_t(0.1);

Graph generate_sbm(const SbmConfig& cfg);

/// Global scalar extrema over the whole feature matrix.
std::pair<real_t, real_t> feature_extrema(const Graph& g);

enum class SamplingMethod { Random, Balanced, PartiallyBalanced };

std::string to_string(SamplingMethod m);
SamplingMethod sampling_method_from_string(const std::string& s);

/// Optional size overrides for sample_split. `per_class` is the per-class
/// count per set (balanced) or per train set (partially balanced);
/// `test_size` is the total test-set size for the partially balanced method.
struct SplitSizes {
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> test_size;
};

/// Four pairwise-disjoint node sets: one train/test pair for the target model
/// and one for the shadow model. Sets are sorted ascending.
struct DatasetSplit {
  std::vector<std::uint32_t> target_train;
  std::vector<std::uint32_t> target_test;
  std::vector<std::uint32_t> shadow_train;
  std::vector<std::uint32_t> shadow_test;
  SamplingMethod method = SamplingMethod::Random;
  std::uint64_t seed = 0;

  const std::vector<std::uint32_t>& set(std::size_t i) const;
};

/// random: shuffle every node and cut four near-equal parts (first parts take
/// the remainder, so all nodes are used). balanced: m = floor(min class
/// count / 4) per class per set unless overridden. partially_balanced: both
/// train sets class-balanced at m_train per class, test sets drawn uniformly
/// from the remainder with |test| = |train| unless overridden; default
/// m_train = floor(min class count * 0.45) capped by num_nodes / (4 *
/// num_classes). Infeasible sizes raise ArgumentError naming the limiting
/// class.
DatasetSplit sample_split(const Graph& g, SamplingMethod method, const SplitSizes& sizes,
                          std::uint64_t seed);

/// Split files are JSON: the four node lists plus the method and seed that
/// produced them. load_split validates sortedness and pairwise disjointness;
/// pass num_nodes > 0 to also bound-check ids against a particular graph.
void save_split(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_split(const std::filesystem::path& path, std::size_t num_nodes = 0);

}  // namespace lmia
