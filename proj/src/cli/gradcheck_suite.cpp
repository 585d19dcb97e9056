#include "fedseg/cli/gradcheck_suite.hpp"

#include <chrono>
#include <functional>

#include "fedseg/error.hpp"
#include "fedseg/metrics/metrics.hpp"
#include "fedseg/model/attention_unet.hpp"
#include "fedseg/numerics/grad_check.hpp"
#include "fedseg/numerics/ops.hpp"
#include "fedseg/rng.hpp"

namespace fedseg::cli {

namespace {

using numerics::Shape;
using numerics::Tensor;
namespace ops = numerics;

// Values in [lo, hi] kept at least 0.1 away from zero, so relu kinks and
// max-pool ties stay outside the finite-difference stencil.
Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) {
    v = rng.uniform(lo, hi);
    v += v < 0 ? -0.1 : 0.1;
  }
  return t;
}

// Random linear read-out, so that every output coordinate gets a distinct
// upstream gradient.
Tensor readout(const Tensor& y, const Tensor& r) { return ops::sum(ops::mul(y, r)); }

struct Case {
  std::vector<Tensor> inputs;
  numerics::ScalarFunction f;
};

Case make_case(std::string_view op, Rng& rng) {
  const Shape s{2, 3, 4, 4};
  if (op == "conv2d") {
    // 3x3 kernel, stride 2, padding 1, with bias: the general im2col path.
    const Tensor r = random_tensor({2, 4, 2, 2}, rng);
    return {{random_tensor({2, 3, 4, 4}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)},
            [r](const std::vector<Tensor>& in) { return readout(ops::conv2d(in[0], in[1], in[2], {2, 1}), r); }};
  }
  if (op == "maxpool2d") {
    const Tensor r = random_tensor({2, 3, 2, 2}, rng);
    return {{random_tensor(s, rng)}, [r](const std::vector<Tensor>& in) { return readout(ops::maxpool2d(in[0]), r); }};
  }
  if (op == "upsample2d_nearest" || op == "upsample2d_bilinear") {
    const auto mode = op == "upsample2d_nearest" ? ops::UpsampleMode::nearest : ops::UpsampleMode::bilinear;
    const Tensor r = random_tensor({2, 3, 8, 8}, rng);
    return {{random_tensor(s, rng)},
            [r, mode](const std::vector<Tensor>& in) { return readout(ops::upsample2d(in[0], mode), r); }};
  }
  if (op == "relu") {
    const Tensor r = random_tensor(s, rng);
    return {{random_tensor(s, rng)}, [r](const std::vector<Tensor>& in) { return readout(ops::relu(in[0]), r); }};
  }
  if (op == "sigmoid") {
    const Tensor r = random_tensor(s, rng);
    return {{random_tensor(s, rng, -3.0, 3.0)},
            [r](const std::vector<Tensor>& in) { return readout(ops::sigmoid(in[0]), r); }};
  }
  if (op == "add") {
    const Tensor r = random_tensor(s, rng);
    return {{random_tensor(s, rng), random_tensor(s, rng)},
            [r](const std::vector<Tensor>& in) { return readout(ops::add(in[0], in[1]), r); }};
  }
  if (op == "add_channel_bias") {
    const Tensor r = random_tensor(s, rng);
    return {{random_tensor(s, rng), random_tensor({3}, rng)},
            [r](const std::vector<Tensor>& in) { return readout(ops::add(in[0], in[1]), r); }};
  }
  if (op == "mul") {
    // The product is itself the read-out.
    return {{random_tensor(s, rng), random_tensor(s, rng)},
            [](const std::vector<Tensor>& in) { return ops::sum(ops::mul(in[0], in[1])); }};
  }
  if (op == "mul_channel_broadcast") {
    return {{random_tensor(s, rng), random_tensor({2, 1, 4, 4}, rng)},
            [](const std::vector<Tensor>& in) { return ops::sum(ops::mul(in[0], in[1])); }};
  }
  if (op == "concat_channels") {
    const Tensor r = random_tensor({2, 5, 4, 4}, rng);
    return {{random_tensor({2, 2, 4, 4}, rng), random_tensor({2, 3, 4, 4}, rng)},
            [r](const std::vector<Tensor>& in) { return readout(ops::concat_channels(in), r); }};
  }
  if (op == "sum") {
    return {{random_tensor(s, rng)}, [](const std::vector<Tensor>& in) { return ops::sum(in[0]); }};
  }
  throw UsageError("gradcheck suite has no case for op '" + std::string(op) + "'");
}

GradCheckEntry run_case(std::string name, Case c, double threshold) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckEntry e;
  e.name = std::move(name);
  e.threshold = threshold;
  for (auto& t : c.inputs) t.set_requires_grad(true);
  e.graph_ops = numerics::recorded_ops(c.f(c.inputs));
  e.max_rel_error = numerics::grad_check(c.f, c.inputs);
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return e;
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  std::uint64_t k = 0;
  for (std::string_view op : numerics::differentiable_ops()) {
    Rng rng(derive_seed(seed, {k++}));
    out.push_back(run_case(std::string(op), make_case(op, rng), kPrimitiveTolerance));
  }

  {
    Rng rng(derive_seed(seed, {k++}));
    Tensor p({2, 1, 5, 5});
    Tensor t({2, 1, 5, 5});
    for (double& v : p.mutable_data()) v = rng.uniform(0.05, 0.95);
    for (double& v : t.mutable_data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
    out.push_back(run_case("soft_dice_loss",
                           {{p}, [t](const std::vector<Tensor>& in) { return metrics::soft_dice_loss(in[0], t); }},
                           kPrimitiveTolerance));
  }

  {
    Rng rng(derive_seed(seed, {k++}));
    auto net = std::make_shared<model::AttentionUNet>(
        model::ModelConfig{.depth = 1, .base_channels = 4, .attention_enabled = true, .init_seed = seed});
    Tensor x({1, 1, 8, 8});
    for (double& v : x.mutable_data()) v = rng.uniform();
    Tensor truth({1, 1, 8, 8});
    for (std::size_t i = 0; i < 64; ++i) {
      const std::size_t r = i / 8, c = i % 8;
      truth.mutable_data()[i] = (r >= 2 && r < 6 && c >= 3) ? 1.0 : 0.0;
    }
    Case c;
    for (const auto& p : net->parameters()) c.inputs.push_back(p.value);
    c.f = [net, x, truth](const std::vector<Tensor>&) { return metrics::soft_dice_loss(net->forward(x), truth); };
    out.push_back(run_case("end_to_end", std::move(c), kEndToEndTolerance));
  }
  return out;
}

}  // namespace fedseg::cli
