#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedseg/data/augment.hpp"
#include "fedseg/data/partition.hpp"
#include "fedseg/fed/fedprox.hpp"
#include "fedseg/model/attention_unet.hpp"

namespace fedseg::cli {

enum class DataSource { synthetic, directory };

/// Everything a run depends on. Serialized as flat `section.key = value`
/// lines; see run_config_keys() for the full list.
struct RunConfig {
  fed::FedConfig fed;
  model::ModelConfig model;
  data::PartitionPlan partition = data::PartitionPlan::paper_default();
  data::AugmentationConfig& augment() { return fed.augmentation; }
  const data::AugmentationConfig& augment() const { return fed.augmentation; }
  DataSource source = DataSource::synthetic;
  std::string data_dir;
  std::string output_dir = "runs/latest";

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Sets every seed (fed, model init, data, augmentation) to `seed`.
  void set_seed(std::uint64_t seed);
};

/// Defaults: the paper's hyperparameters and client plan, seed 7 everywhere.
RunConfig default_run_config();

/// All accepted keys, in snapshot order.
std::span<const std::string_view> run_config_keys();

/// Applies one `key = value` setting. Throws ConfigError for unknown keys and
/// unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Parses a config file body on top of default_run_config(). Blank lines and
/// `#` comments are ignored; a key may appear only once.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its current value; parse_run_config(format_run_config(c))
/// reproduces c exactly.
std::string format_run_config(const RunConfig& config);

}  // namespace fedseg::cli
