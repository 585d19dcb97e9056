#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedseg/numerics/tensor.hpp"

namespace fedseg::model {

using numerics::Tensor;

struct ModelConfig {
  int in_channels = 1;
  int out_channels = 1;
  /// Number of 2x down-samplings in the contracting path.
  int depth = 3;
  /// Channels at the top level; doubled at every level below.
  int base_channels = 16;
  bool attention_enabled = true;
  std::uint64_t init_seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Input extents must be a multiple of this.
  std::size_t spatial_divisor() const { return std::size_t{1} << depth; }

  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered, uniquely named parameters. The order is fixed by the model
/// configuration and defines the flat weight-vector layout.
class ParameterSet {
 public:
  Tensor& add(std::string name, numerics::Shape shape);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_count() const;
  const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
  NamedTensor& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor* find(std::string_view name) const;
  NamedTensor* find(std::string_view name);

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

 private:
  std::vector<NamedTensor> entries_;
};

struct ConvLayer {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor operator()(const Tensor& x) const;
};

/// Additive attention gate on one skip connection.
///   x: skip tensor [N, F_x, H, W]; g: gating tensor [N, F_g, H/2, W/2]
struct AttentionGate {
  ConvLayer w_x;  // 2x2, stride 2: F_x -> F_int
  ConvLayer w_g;  // 1x1: F_g -> F_int
  ConvLayer psi;  // 1x1: F_int -> 1
};

struct GateOutput {
  Tensor gated;         // same shape as x
  Tensor coefficients;  // [N, 1, H, W], strictly inside (0, 1)
};

GateOutput attention_gate(const AttentionGate& gate, const Tensor& x, const Tensor& g);

/// Intermediate values of one forward pass, for inspection.
struct ForwardTrace {
  Tensor output;
  std::vector<Tensor> skips;         // per level, top first
  std::vector<GateOutput> gates;     // per level, top first; empty without attention
};

/// U-Net with optional additive attention gates on the skip connections.
///
/// Per level l (channels C_l = base * 2^l): two 3x3 conv + relu blocks, then
/// 2x2 max pooling. The decoder upsamples bilinearly, applies 3x3 conv +
/// relu, concatenates the (gated) skip tensor and runs another double conv
/// block. A 1x1 conv and a sigmoid produce per-pixel probabilities.
class AttentionUNet {
 public:
  explicit AttentionUNet(ModelConfig config);

  AttentionUNet(const AttentionUNet&) = delete;
  AttentionUNet& operator=(const AttentionUNet&) = delete;
  AttentionUNet(AttentionUNet&&) noexcept = default;
  AttentionUNet& operator=(AttentionUNet&&) noexcept = default;

  /// Deep copy with independent parameter storage.
  AttentionUNet clone() const;

  const ModelConfig& config() const { return config_; }
  const ParameterSet& parameters() const { return params_; }
  ParameterSet& parameters() { return params_; }
  std::size_t parameter_count() const { return params_.total_count(); }

  /// batch [N, in_channels, H, W] -> probabilities [N, out_channels, H, W].
  Tensor forward(const Tensor& batch) const;
  ForwardTrace forward_trace(const Tensor& batch) const;

  std::vector<double> get_weights() const;
  /// Throws ShapeError (leaving the model untouched) on a length mismatch.
  void set_weights(std::span<const double> weights);

  std::vector<double> gradients() const;
  void zero_grad();

  const std::vector<AttentionGate>& gates() const { return gates_; }

 private:
  struct DoubleConv {
    ConvLayer first, second;
  };
  struct Level {
    DoubleConv encoder;
    ConvLayer up;
    DoubleConv decoder;
  };

  void build();
  ConvLayer make_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                      std::size_t stride, std::size_t padding);
  DoubleConv make_double(const std::string& name, std::size_t cin, std::size_t cout);

  ModelConfig config_;
  ParameterSet params_;
  std::vector<Level> levels_;
  DoubleConv bottleneck_;
  std::vector<AttentionGate> gates_;
  ConvLayer head_;
};

}  // namespace fedseg::model
