#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedseg::cli {

struct GradCheckEntry {
  std::string name;  // graph op name, or "end_to_end"
  double max_rel_error = 0.0;
  double threshold = 0.0;
  std::vector<std::string> graph_ops;  // ops recorded by the checked function
  double seconds = 0.0;

  bool passed() const { return max_rel_error <= threshold; }
};

inline constexpr double kPrimitiveTolerance = 1e-5;
inline constexpr double kEndToEndTolerance = 1e-4;

/// One finite-difference check per differentiable primitive (in the order of
/// numerics::differentiable_ops()), then soft Dice, then soft Dice through an
/// attention U-Net of depth 1 on a 1x1x8x8 input.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 1);

}  // namespace fedseg::cli
