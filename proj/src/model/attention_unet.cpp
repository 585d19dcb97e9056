#include "fedseg/model/attention_unet.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fedseg/error.hpp"
#include "fedseg/numerics/ops.hpp"
#include "fedseg/rng.hpp"

namespace fedseg::model {

namespace ops = numerics;

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("model.in_channels", "must be >= 1");
  if (out_channels < 1) throw ConfigError("model.out_channels", "must be >= 1");
  if (depth < 1) throw ConfigError("model.depth", "must be >= 1");
  if (depth > 10) throw ConfigError("model.depth", "must be <= 10");
  if (base_channels < 1) throw ConfigError("model.base_channels", "must be >= 1");
}

Tensor& ParameterSet::add(std::string name, numerics::Shape shape) {
  if (find(name) != nullptr) throw UsageError("duplicate parameter name " + name);
  entries_.push_back({std::move(name), Tensor(std::move(shape))});
  entries_.back().value.set_requires_grad(true);
  return entries_.back().value;
}

std::size_t ParameterSet::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

const NamedTensor* ParameterSet::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const NamedTensor& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

NamedTensor* ParameterSet::find(std::string_view name) {
  return const_cast<NamedTensor*>(std::as_const(*this).find(name));
}

Tensor ConvLayer::operator()(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, {stride, padding});
}

GateOutput attention_gate(const AttentionGate& gate, const Tensor& x, const Tensor& g) {
  if (x.rank() != 4 || g.rank() != 4) throw ShapeError("attention_gate: x and g must be rank 4");
  if (x.dim(0) != g.dim(0) || x.dim(2) != 2 * g.dim(2) || x.dim(3) != 2 * g.dim(3)) {
    throw ShapeError("attention_gate: g " + numerics::shape_string(g.shape()) +
                     " must have half the spatial resolution of x " + numerics::shape_string(x.shape()));
  }
  const Tensor theta = gate.w_x(x);
  const Tensor phi = gate.w_g(g);
  const Tensor activated = ops::relu(ops::add(theta, phi));
  const Tensor coarse = ops::sigmoid(gate.psi(activated));
  const Tensor coefficients = ops::upsample2d(coarse, ops::UpsampleMode::bilinear);
  return {ops::mul(x, coefficients), coefficients};
}

AttentionUNet::AttentionUNet(ModelConfig config) : config_(config) {
  config_.validate();
  build();
}

ConvLayer AttentionUNet::make_conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k,
                                   std::size_t stride, std::size_t padding) {
  ConvLayer layer;
  layer.weight = params_.add(name + ".weight", {cout, cin, k, k});
  layer.bias = params_.add(name + ".bias", {cout});
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

AttentionUNet::DoubleConv AttentionUNet::make_double(const std::string& name, std::size_t cin, std::size_t cout) {
  DoubleConv block;
  block.first = make_conv(name + ".conv1", cin, cout, 3, 1, 1);
  block.second = make_conv(name + ".conv2", cout, cout, 3, 1, 1);
  return block;
}

void AttentionUNet::build() {
  const auto depth = static_cast<std::size_t>(config_.depth);
  const auto base = static_cast<std::size_t>(config_.base_channels);
  auto channels = [base](std::size_t level) { return base << level; };

  levels_.resize(depth);
  std::size_t cin = static_cast<std::size_t>(config_.in_channels);
  for (std::size_t l = 0; l < depth; ++l) {
    levels_[l].encoder = make_double("enc" + std::to_string(l), cin, channels(l));
    cin = channels(l);
  }
  bottleneck_ = make_double("bottleneck", cin, channels(depth));

  if (config_.attention_enabled) gates_.resize(depth);
  for (std::size_t step = 0; step < depth; ++step) {
    const std::size_t l = depth - 1 - step;
    const std::string tag = std::to_string(l);
    const std::size_t c_skip = channels(l);
    const std::size_t c_gate = channels(l + 1);
    levels_[l].up = make_conv("dec" + tag + ".up", c_gate, c_skip, 3, 1, 1);
    if (config_.attention_enabled) {
      const std::size_t f_int = std::max<std::size_t>(1, c_gate / 2);
      auto& gate = gates_[l];
      gate.w_x = make_conv("gate" + tag + ".w_x", c_skip, f_int, 2, 2, 0);
      gate.w_g = make_conv("gate" + tag + ".w_g", c_gate, f_int, 1, 1, 0);
      gate.psi = make_conv("gate" + tag + ".psi", f_int, 1, 1, 1, 0);
    }
    levels_[l].decoder = make_double("dec" + tag, 2 * c_skip, c_skip);
  }
  head_ = make_conv("head", channels(0), static_cast<std::size_t>(config_.out_channels), 1, 1, 0);

  // He normal for kernels, zero biases, drawn in parameter order.
  Rng rng(config_.init_seed);
  for (auto& p : params_) {
    if (p.value.rank() != 4) continue;
    const auto& s = p.value.shape();
    const double std_dev = std::sqrt(2.0 / static_cast<double>(s[1] * s[2] * s[3]));
    for (double& v : p.value.mutable_data()) v = std_dev * rng.normal();
  }
}

AttentionUNet AttentionUNet::clone() const {
  AttentionUNet copy(config_);
  copy.set_weights(get_weights());
  return copy;
}

ForwardTrace AttentionUNet::forward_trace(const Tensor& batch) const {
  if (batch.rank() != 4) throw ShapeError("forward: batch must be rank 4, got " + numerics::shape_string(batch.shape()));
  if (batch.dim(1) != static_cast<std::size_t>(config_.in_channels)) {
    throw ShapeError("forward: axis 1 (channels) is " + std::to_string(batch.dim(1)) + ", model expects " +
                     std::to_string(config_.in_channels));
  }
  const std::size_t div = config_.spatial_divisor();
  if (batch.dim(2) % div != 0 || batch.dim(3) % div != 0) {
    throw ShapeError("forward: spatial extents " + numerics::shape_string(batch.shape()) + " must be divisible by " +
                     std::to_string(div));
  }
  auto run = [](const DoubleConv& block, const Tensor& x) {
    return ops::relu(block.second(ops::relu(block.first(x))));
  };

  ForwardTrace trace;
  Tensor x = batch;
  for (const auto& level : levels_) {
    x = run(level.encoder, x);
    trace.skips.push_back(x);
    x = ops::maxpool2d(x);
  }
  x = run(bottleneck_, x);

  if (config_.attention_enabled) trace.gates.resize(levels_.size());
  for (std::size_t step = 0; step < levels_.size(); ++step) {
    const std::size_t l = levels_.size() - 1 - step;
    const Tensor up = ops::relu(levels_[l].up(ops::upsample2d(x, ops::UpsampleMode::bilinear)));
    Tensor skip = trace.skips[l];
    if (config_.attention_enabled) {
      trace.gates[l] = attention_gate(gates_[l], skip, x);
      skip = trace.gates[l].gated;
    }
    const Tensor parts[] = {skip, up};
    x = run(levels_[l].decoder, ops::concat_channels(parts));
  }
  trace.output = ops::sigmoid(head_(x));
  return trace;
}

Tensor AttentionUNet::forward(const Tensor& batch) const { return forward_trace(batch).output; }

std::vector<double> AttentionUNet::get_weights() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) flat.insert(flat.end(), p.value.data().begin(), p.value.data().end());
  return flat;
}

void AttentionUNet::set_weights(std::span<const double> weights) {
  if (weights.size() != parameter_count()) {
    throw ShapeError("set_weights: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(weights.size()));
  }
  std::size_t offset = 0;
  for (auto& p : params_) {
    auto dst = p.value.mutable_data();
    std::copy_n(weights.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

std::vector<double> AttentionUNet::gradients() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : params_) {
    if (p.value.has_grad()) {
      flat.insert(flat.end(), p.value.grad().begin(), p.value.grad().end());
    } else {
      flat.insert(flat.end(), p.value.numel(), 0.0);
    }
  }
  return flat;
}

void AttentionUNet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

}  // namespace fedseg::model
