#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fedseg/model/attention_unet.hpp"

namespace fedseg::model {

/// FPWT weight files. Little-endian layout:
///   "FPWT" | u32 version (=1) | u32 tensor count |
///   per tensor: u16 name length, UTF-8 name, u8 rank, u32 extent * rank,
///               f64 * numel
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `model`. Names, order and shapes must match
/// the model's ParameterSet; otherwise throws FormatError naming the first
/// mismatched tensor and leaves the model untouched.
void apply_checkpoint(AttentionUNet& model, const std::vector<NamedTensor>& tensors);

}  // namespace fedseg::model
