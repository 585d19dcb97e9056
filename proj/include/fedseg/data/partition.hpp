#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedseg/data/sample.hpp"

namespace fedseg::data {

struct LabelCount {
  Label label;
  int count;

  bool operator==(const LabelCount&) const = default;
};

using Composition = std::vector<LabelCount>;

/// "benign:400,normal:50" <-> Composition. Parsing throws ConfigError keyed
/// by `key`.
Composition parse_composition(const std::string& text, const std::string& key);
std::string format_composition(const Composition& composition);

/// Per-client and server-test label mixes, scaled uniformly.
struct PartitionPlan {
  std::vector<Composition> clients;
  Composition server_test;
  double scale = 1.0;
  std::uint64_t seed = 0;
  int image_size = 64;

  /// Three label-skewed clients and a mixed server test set:
  ///   client 1: 400 benign + 50 normal
  ///   client 2: 200 malignant + 50 normal
  ///   client 3: 110 benign + 53 malignant
  ///   server:   97 benign + 23 malignant + 34 normal
  static PartitionPlan paper_default();

  void validate() const;
};

/// round(count * scale) to nearest, but never below 1 for a nonzero count.
int scaled_count(int count, double scale);

struct Partition {
  std::vector<Dataset> clients;
  Dataset server_test;
};

/// Materializes the plan from synthetic phantoms. Sample ids are unique
/// across the whole partition; every sample has its own RNG stream derived
/// from (plan.seed, id).
Partition build_partition(const PartitionPlan& plan);

/// Draws the plan's scaled per-label counts without replacement from `pool`
/// (e.g. a loaded directory). Throws ConfigError when a label runs short.
Partition build_partition(const PartitionPlan& plan, const Dataset& pool);

struct Split {
  Dataset train;
  Dataset test;
};

/// Label-stratified split: for each present label, round(fraction * n_label)
/// samples (at least 1) go to `test`. Requires at least 5 samples.
Split train_test_split(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace fedseg::data
