#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fedseg/cli/run_config.hpp"
#include "fedseg/data/image_io.hpp"
#include "fedseg/metrics/metrics.hpp"

namespace fedseg::cli {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kRoundsCsvHeader = "round,dice_loss,iou,sensitivity,specificity,f1,accuracy";
inline constexpr std::string_view kClientsCsvHeader =
    "round,client,dice_loss,iou,sensitivity,specificity,f1,accuracy";

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitInvalid = 2 };

/// "0.123456,..." in rounds.csv column order, 6 decimals.
std::string format_metrics_csv(const metrics::MetricsRow& row);

/// Client datasets and server test set described by `config`: synthetic
/// phantoms, or draws from a BUS-layout directory.
data::Partition materialize_partition(const RunConfig& config);

/// Grayscale input with the ground-truth boundary drawn black and the
/// predicted boundary (probability >= 0.5) drawn white.
data::GrayImage render_overlay(const data::Sample& sample, std::span<const double> probabilities);

struct SimulateOptions {
  std::string config_path;
  std::string manifest_path;  // replay the config recorded in a manifest
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<bool> sequential;
};

struct EvalOptions {
  std::string checkpoint_path;
  std::string config_path;
  std::string data_dir;
  std::string overlays_dir;
  std::optional<std::uint64_t> seed;
};

struct GenDataOptions {
  std::string counts;
  int size = 64;
  std::uint64_t seed = 7;
  std::string out_dir;
};

/// Each command returns an ExitCode; diagnostics go to `err`.
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);
int cmd_gen_data(const GenDataOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::uint64_t seed, bool inject_fault, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fedseg::cli
