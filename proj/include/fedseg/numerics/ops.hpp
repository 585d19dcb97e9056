#pragma once

#include <span>
#include <string_view>

#include "fedseg/numerics/tensor.hpp"

namespace fedseg::numerics {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// input [N,Cin,H,W] * kernel [Cout,Cin,kH,kW] + bias [Cout] -> [N,Cout,H',W']
/// with H' = (H + 2p - kH)/stride + 1 and zero padding. `bias` may be an
/// undefined tensor.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Conv2dOptions options = {});

/// 2x2 window, stride 2. Backward routes to the first maximum in row-major
/// window order.
Tensor maxpool2d(const Tensor& input);

enum class UpsampleMode { nearest, bilinear };

/// Doubles both spatial extents. Bilinear sampling uses the
/// align-corners-false convention.
Tensor upsample2d(const Tensor& input, UpsampleMode mode);

Tensor relu(const Tensor& x);

/// Output clamped to the open interval (0, 1) so saturated inputs never
/// produce an exact 0 or 1.
Tensor sigmoid(const Tensor& x);

/// Equal shapes, or `b` of shape [C] broadcast over the N, H, W axes of a
/// [N,C,H,W] tensor `a`.
Tensor add(const Tensor& a, const Tensor& b);

/// Equal shapes, or `b` of shape [N,1,H,W] broadcast over the channels of a
/// [N,C,H,W] tensor `a`.
Tensor mul(const Tensor& a, const Tensor& b);

/// Concatenates rank-4 tensors along axis 1.
Tensor concat_channels(std::span<const Tensor> parts);

/// Scalar sum of all elements.
Tensor sum(const Tensor& x);

/// Graph names of every operation this module can record. Broadcasting
/// variants get their own names.
std::span<const std::string_view> differentiable_ops();

}  // namespace fedseg::numerics
