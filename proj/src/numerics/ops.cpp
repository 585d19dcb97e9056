#include "fedseg/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedseg/error.hpp"

namespace fedseg::numerics {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void dimension_error(const std::string& op, const std::string& detail) {
  throw ShapeError(op + ": " + detail);
}

void require_rank4(const std::string& op, const Tensor& t, const char* what) {
  if (t.rank() != 4) {
    dimension_error(op, std::string(what) + " must be rank 4 [N,C,H,W], got " +
                            shape_string(t.shape()));
  }
}

detail::TensorImpl& input_of(const detail::TensorImpl& out, std::size_t i) {
  return *out.grad_fn->inputs[i];
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// col [cin*kh*kw, ho*wo] for one image.
void im2col(const double* image, const ConvGeometry& g, double* col) {
  const auto ih = static_cast<std::ptrdiff_t>(g.h);
  const auto iw = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* plane = image + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (y < 0 || y >= ih) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (x < 0 || x >= iw) ? 0.0 : plane[y * iw + x];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* image) {
  const auto ih = static_cast<std::ptrdiff_t>(g.h);
  const auto iw = static_cast<std::ptrdiff_t>(g.w);
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* plane = image + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.positions();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto y = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= ih) continue;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto x = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (x >= 0 && x < iw) plane[y * iw + x] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dOptions options) {
  const std::string op = "conv2d";
  require_rank4(op, input, "input");
  require_rank4(op, kernel, "kernel");
  if (options.stride == 0) dimension_error(op, "stride must be positive");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = options.stride;
  g.pad = options.padding;
  if (kernel.dim(1) != g.cin) {
    dimension_error(op, "axis 1 (input channels) mismatch: input " + shape_string(input.shape()) +
                            " vs kernel " + shape_string(kernel.shape()));
  }
  if (g.h + 2 * g.pad < g.kh) {
    dimension_error(op, "axis 2 (height) " + std::to_string(g.h) + " with padding " +
                            std::to_string(g.pad) + " is smaller than kernel height " +
                            std::to_string(g.kh));
  }
  if (g.w + 2 * g.pad < g.kw) {
    dimension_error(op, "axis 3 (width) " + std::to_string(g.w) + " with padding " +
                            std::to_string(g.pad) + " is smaller than kernel width " +
                            std::to_string(g.kw));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    dimension_error(op, "bias must have shape [" + std::to_string(g.cout) + "], got " +
                            shape_string(bias.shape()));
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.positions();
  Buffer out(g.n * out_plane);
  Buffer col(g.pointwise() ? 0 : g.patch() * g.positions());
  const ConstMap weights(kernel.data().data(), static_cast<Eigen::Index>(g.cout),
                         static_cast<Eigen::Index>(g.patch()));
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* src = input.data().data() + b * in_plane;
    if (!g.pointwise()) {
      im2col(src, g, col.data());
      src = col.data();
    }
    const ConstMap cols(src, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
    MutMap dst(out.data() + b * out_plane, static_cast<Eigen::Index>(g.cout),
               static_cast<Eigen::Index>(g.positions()));
    dst.noalias() = weights * cols;
    if (bias.defined()) {
      for (std::size_t c = 0; c < g.cout; ++c) dst.row(static_cast<Eigen::Index>(c)).array() += bias.data()[c];
    }
  }

  std::vector<Tensor> inputs{input, kernel};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return Tensor::make_result(
      op, Shape{g.n, g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
      [g, has_bias](const detail::TensorImpl& result) {
        auto& x = input_of(result, 0);
        auto& k = input_of(result, 1);
        const std::size_t in_plane = g.cin * g.h * g.w;
        const std::size_t out_plane = g.cout * g.positions();
        const auto rows = static_cast<Eigen::Index>(g.cout);
        const auto patch = static_cast<Eigen::Index>(g.patch());
        const auto cols_n = static_cast<Eigen::Index>(g.positions());
        const ConstMap weights(k.data.data(), rows, patch);
        Buffer col(g.pointwise() ? 0 : g.patch() * g.positions());
        Buffer dcol(g.pointwise() ? 0 : g.patch() * g.positions());
        for (std::size_t b = 0; b < g.n; ++b) {
          const ConstMap dy(result.grad.data() + b * out_plane, rows, cols_n);
          if (k.requires_grad) {
            const double* src = x.data.data() + b * in_plane;
            if (!g.pointwise()) {
              im2col(src, g, col.data());
              src = col.data();
            }
            const ConstMap cols(src, patch, cols_n);
            MutMap dk(k.grad.data(), rows, patch);
            dk.noalias() += dy * cols.transpose();
          }
          if (x.requires_grad) {
            if (g.pointwise()) {
              MutMap dx(x.grad.data() + b * in_plane, patch, cols_n);
              dx.noalias() += weights.transpose() * dy;
            } else {
              MutMap dc(dcol.data(), patch, cols_n);
              dc.noalias() = weights.transpose() * dy;
              col2im_add(dcol.data(), g, x.grad.data() + b * in_plane);
            }
          }
          if (has_bias) {
            auto& bias_t = input_of(result, 2);
            if (bias_t.requires_grad) {
              for (std::size_t c = 0; c < g.cout; ++c) {
                bias_t.grad[c] += dy.row(static_cast<Eigen::Index>(c)).sum();
              }
            }
          }
        }
      });
}

Tensor maxpool2d(const Tensor& input) {
  const std::string op = "maxpool2d";
  require_rank4(op, input, "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0) dimension_error(op, "axis 2 (height) must be even, got " + std::to_string(h));
  if (w % 2 != 0) dimension_error(op, "axis 3 (width) must be even, got " + std::to_string(w));
  const std::size_t ho = h / 2, wo = w / 2;
  Buffer out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const double* x = input.data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        std::size_t best = base + (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return Tensor::make_result(op, Shape{n, c, ho, wo}, std::move(out), {input},
                             [argmax = std::move(argmax)](const detail::TensorImpl& result) {
                               auto& gx = input_of(result, 0).grad;
                               for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += result.grad[i];
                             });
}

namespace {

// Source taps for one output coordinate of an align-corners-false 2x upsample.
struct LinearTap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<LinearTap> bilinear_taps(std::size_t in) {
  std::vector<LinearTap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    const double src = std::max(0.0, (static_cast<double>(o) + 0.5) / 2.0 - 0.5);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor upsample2d(const Tensor& input, UpsampleMode mode) {
  const std::string op = mode == UpsampleMode::nearest ? "upsample2d_nearest" : "upsample2d_bilinear";
  require_rank4(op, input, "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  Buffer out(n * c * ho * wo);
  const double* x = input.data().data();

  if (mode == UpsampleMode::nearest) {
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          out[(plane * ho + oy) * wo + ox] = x[(plane * h + oy / 2) * w + ox / 2];
        }
      }
    }
    return Tensor::make_result(op, Shape{n, c, ho, wo}, std::move(out), {input},
                               [n, c, h, w](const detail::TensorImpl& result) {
                                 auto& gx = input_of(result, 0).grad;
                                 const std::size_t ho = 2 * h, wo = 2 * w;
                                 for (std::size_t plane = 0; plane < n * c; ++plane) {
                                   for (std::size_t oy = 0; oy < ho; ++oy) {
                                     for (std::size_t ox = 0; ox < wo; ++ox) {
                                       gx[(plane * h + oy / 2) * w + ox / 2] +=
                                           result.grad[(plane * ho + oy) * wo + ox];
                                     }
                                   }
                                 }
                               });
  }

  const auto ty = bilinear_taps(h);
  const auto tx = bilinear_taps(w);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* p = x + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const auto& b = tx[ox];
        const double top = p[a.lo * w + b.lo] * (1.0 - b.w_hi) + p[a.lo * w + b.hi] * b.w_hi;
        const double bottom = p[a.hi * w + b.lo] * (1.0 - b.w_hi) + p[a.hi * w + b.hi] * b.w_hi;
        out[(plane * ho + oy) * wo + ox] = top * (1.0 - a.w_hi) + bottom * a.w_hi;
      }
    }
  }
  return Tensor::make_result(op, Shape{n, c, ho, wo}, std::move(out), {input},
                             [n, c, h, w, ty, tx](const detail::TensorImpl& result) {
                               auto& gx = input_of(result, 0).grad;
                               const std::size_t ho = 2 * h, wo = 2 * w;
                               for (std::size_t plane = 0; plane < n * c; ++plane) {
                                 double* p = gx.data() + plane * h * w;
                                 for (std::size_t oy = 0; oy < ho; ++oy) {
                                   const auto& a = ty[oy];
                                   for (std::size_t ox = 0; ox < wo; ++ox) {
                                     const auto& b = tx[ox];
                                     const double gy = result.grad[(plane * ho + oy) * wo + ox];
                                     p[a.lo * w + b.lo] += gy * (1.0 - a.w_hi) * (1.0 - b.w_hi);
                                     p[a.lo * w + b.hi] += gy * (1.0 - a.w_hi) * b.w_hi;
                                     p[a.hi * w + b.lo] += gy * a.w_hi * (1.0 - b.w_hi);
                                     p[a.hi * w + b.hi] += gy * a.w_hi * b.w_hi;
                                   }
                                 }
                               }
                             });
}

Tensor relu(const Tensor& x) {
  Buffer out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result("relu", x.shape(), std::move(out), {x}, [](const detail::TensorImpl& result) {
    auto& in = input_of(result, 0);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      if (in.data[i] > 0.0) in.grad[i] += result.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  Buffer out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in[i];
    // exp of a non-positive argument only, so large |v| cannot overflow.
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    out[i] = std::clamp(s, lo, hi);
  }
  return Tensor::make_result("sigmoid", x.shape(), std::move(out), {x}, [](const detail::TensorImpl& result) {
    auto& g = input_of(result, 0).grad;
    const double fault = testing::backward_fault() ? 1.01 : 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = result.data[i];
      g[i] += fault * result.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Buffer out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor::make_result("add", a.shape(), std::move(out), {a, b}, [](const detail::TensorImpl& result) {
      for (std::size_t k = 0; k < 2; ++k) {
        auto& in = input_of(result, k);
        if (!in.requires_grad) continue;
        for (std::size_t i = 0; i < result.grad.size(); ++i) in.grad[i] += result.grad[i];
      }
    });
  }
  if (a.rank() == 4 && b.rank() == 1 && b.dim(0) == a.dim(1)) {
    const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    Buffer out(a.numel());
    for (std::size_t i = 0; i < n * c; ++i) {
      const double bias = b.data()[i % c];
      for (std::size_t j = 0; j < hw; ++j) out[i * hw + j] = a.data()[i * hw + j] + bias;
    }
    return Tensor::make_result("add_channel_bias", a.shape(), std::move(out), {a, b},
                               [n, c, hw](const detail::TensorImpl& result) {
                                 auto& x = input_of(result, 0);
                                 auto& bias = input_of(result, 1);
                                 if (x.requires_grad) {
                                   for (std::size_t i = 0; i < result.grad.size(); ++i) x.grad[i] += result.grad[i];
                                 }
                                 if (bias.requires_grad) {
                                   for (std::size_t i = 0; i < n * c; ++i) {
                                     double s = 0.0;
                                     for (std::size_t j = 0; j < hw; ++j) s += result.grad[i * hw + j];
                                     bias.grad[i % c] += s;
                                   }
                                 }
                               });
  }
  dimension_error("add", "cannot broadcast " + shape_string(b.shape()) + " onto " + shape_string(a.shape()) +
                             " (only equal shapes or a per-channel [C] operand)");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Buffer out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor::make_result("mul", a.shape(), std::move(out), {a, b}, [](const detail::TensorImpl& result) {
      auto& x = input_of(result, 0);
      auto& y = input_of(result, 1);
      // Read both operands before accumulating: x and y may be the same tensor.
      for (std::size_t i = 0; i < result.grad.size(); ++i) {
        const double xv = x.data[i], yv = y.data[i], g = result.grad[i];
        if (x.requires_grad) x.grad[i] += g * yv;
        if (y.requires_grad) y.grad[i] += g * xv;
      }
    });
  }
  if (a.rank() == 4 && b.rank() == 4 && b.dim(1) == 1 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
      a.dim(3) == b.dim(3)) {
    const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    Buffer out(a.numel());
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (s * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) out[off + j] = a.data()[off + j] * b.data()[s * hw + j];
      }
    }
    return Tensor::make_result("mul_channel_broadcast", a.shape(), std::move(out), {a, b},
                               [n, c, hw](const detail::TensorImpl& result) {
                                 auto& x = input_of(result, 0);
                                 auto& m = input_of(result, 1);
                                 for (std::size_t s = 0; s < n; ++s) {
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                     const std::size_t off = (s * c + ch) * hw;
                                     for (std::size_t j = 0; j < hw; ++j) {
                                       const double g = result.grad[off + j];
                                       if (x.requires_grad) x.grad[off + j] += g * m.data[s * hw + j];
                                       if (m.requires_grad) m.grad[s * hw + j] += g * x.data[off + j];
                                     }
                                   }
                                 }
                               });
  }
  dimension_error("mul", "cannot broadcast " + shape_string(b.shape()) + " onto " + shape_string(a.shape()) +
                             " (only equal shapes or a single-channel [N,1,H,W] operand)");
}

Tensor concat_channels(std::span<const Tensor> parts) {
  const std::string op = "concat_channels";
  if (parts.empty()) dimension_error(op, "needs at least one tensor");
  for (const auto& p : parts) require_rank4(op, p, "operand");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::size_t total_c = 0;
  std::vector<std::size_t> channels;
  for (const auto& p : parts) {
    for (std::size_t axis : {std::size_t{0}, std::size_t{2}, std::size_t{3}}) {
      if (p.dim(axis) != parts[0].dim(axis)) {
        dimension_error(op, "axis " + std::to_string(axis) + " mismatch: " + shape_string(parts[0].shape()) +
                                " vs " + shape_string(p.shape()));
      }
    }
    channels.push_back(p.dim(1));
    total_c += p.dim(1);
  }
  const std::size_t hw = h * w;
  Buffer out(n * total_c * hw);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t c_off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].data().data() + s * channels[k] * hw;
      std::copy(src, src + channels[k] * hw, out.data() + (s * total_c + c_off) * hw);
      c_off += channels[k];
    }
  }
  return Tensor::make_result(op, Shape{n, total_c, h, w}, std::move(out),
                             std::vector<Tensor>(parts.begin(), parts.end()),
                             [n, total_c, hw, channels](const detail::TensorImpl& result) {
                               for (std::size_t s = 0; s < n; ++s) {
                                 std::size_t c_off = 0;
                                 for (std::size_t k = 0; k < channels.size(); ++k) {
                                   auto& in = input_of(result, k);
                                   if (in.requires_grad) {
                                     const double* src = result.grad.data() + (s * total_c + c_off) * hw;
                                     double* dst = in.grad.data() + s * channels[k] * hw;
                                     for (std::size_t i = 0; i < channels[k] * hw; ++i) dst[i] += src[i];
                                   }
                                   c_off += channels[k];
                                 }
                               }
                             });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result("sum", Shape{1}, {s}, {x}, [](const detail::TensorImpl& result) {
    auto& g = input_of(result, 0).grad;
    for (double& v : g) v += result.grad[0];
  });
}

std::span<const std::string_view> differentiable_ops() {
  static constexpr std::string_view kNames[] = {
      "conv2d", "maxpool2d", "upsample2d_nearest", "upsample2d_bilinear", "relu", "sigmoid", "add",
      "add_channel_bias", "mul", "mul_channel_broadcast", "concat_channels", "sum",
  };
  return kNames;
}

}  // namespace fedseg::numerics
