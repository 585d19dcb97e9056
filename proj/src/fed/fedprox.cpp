#include "fedseg/fed/fedprox.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>

#include "fedseg/error.hpp"
#include "fedseg/numerics/tensor.hpp"

namespace fedseg::fed {

namespace {

constexpr std::uint64_t kSplitTag = 0x53504c4954ULL;
constexpr std::uint64_t kEpochTag = 0x45504f4348ULL;

}  // namespace

void FedConfig::validate() const {
  if (rounds < 1) throw ConfigError("fed.rounds", "must be >= 1");
  if (local_epochs < 1) throw ConfigError("fed.local_epochs", "must be >= 1");
  for (int e : local_epochs_per_client) {
    if (e < 1) throw ConfigError("fed.local_epochs_per_client", "every entry must be >= 1");
  }
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("fed.mu", "must be non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("fed.weight_decay", "must be non-negative");
  if (!(adam_lr > 0.0) || !std::isfinite(adam_lr)) throw ConfigError("fed.adam_lr", "must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("fed.adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("fed.adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("fed.adam_eps", "must be positive");
  if (batch_size < 1) throw ConfigError("fed.batch_size", "must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("fed.test_fraction", "must lie in (0, 1)");
  augmentation.validate();
}

int FedConfig::epochs_for(std::size_t client_id) const {
  return client_id < local_epochs_per_client.size() ? local_epochs_per_client[client_id] : local_epochs;
}

std::string_view algorithm_name(Algorithm a) { return a == Algorithm::fedavg ? "fedavg" : "fedprox"; }

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  if (name == "fedprox") return Algorithm::fedprox;
  if (name == "fedavg") return Algorithm::fedavg;
  return std::nullopt;
}

std::vector<ClientState> make_clients(const std::vector<data::Dataset>& datasets, const FedConfig& cfg) {
  std::vector<ClientState> clients;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (datasets[i].size() < 5) {
      throw ConfigError("data.clients", "client " + std::to_string(i + 1) + " has " +
                                            std::to_string(datasets[i].size()) + " samples; at least 5 are needed");
    }
    auto split = data::train_test_split(datasets[i], cfg.test_fraction, derive_seed(cfg.seed, {kSplitTag, i}));
    ClientState c;
    c.id = i;
    c.train = std::move(split.train);
    c.test = std::move(split.test);
    c.optimizer = Adam(cfg.adam());
    clients.push_back(std::move(c));
  }
  return clients;
}

std::uint64_t epoch_stream_seed(const FedConfig& cfg, std::size_t client_id, int round, int epoch) {
  return derive_seed(cfg.seed, {kEpochTag, cfg.augmentation.seed, client_id, static_cast<std::uint64_t>(round),
                                static_cast<std::uint64_t>(epoch)});
}

std::vector<data::Batch> epoch_batches(const data::Dataset& train, const FedConfig& cfg, std::size_t client_id,
                                       int round, int epoch) {
  if (train.empty()) throw ConfigError("data.clients", "client " + std::to_string(client_id + 1) + " has no training data");
  Rng rng(epoch_stream_seed(cfg, client_id, round, epoch));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  data::Dataset epoch_samples;
  epoch_samples.reserve(order.size());
  for (std::size_t i : order) epoch_samples.push_back(data::augment(train[i], cfg.augmentation, rng));
  std::vector<data::Batch> batches;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < epoch_samples.size(); start += bs) {
    const std::size_t n = std::min(bs, epoch_samples.size() - start);
    batches.push_back(data::make_batch(std::span<const data::Sample>(epoch_samples).subspan(start, n)));
  }
  return batches;
}

LossAndGradient loss_and_gradient(model::AttentionUNet& model, const data::Batch& batch) {
  model.zero_grad();
  const numerics::Tensor prediction = model.forward(batch.images);
  numerics::Tensor loss = metrics::soft_dice_loss(prediction, batch.masks);
  loss.backward();
  return {loss.item(), model.gradients()};
}

void add_regularizers(std::span<double> gradient, std::span<const double> w, std::span<const double> w_global,
                      double mu, double weight_decay) {
  if (gradient.size() != w.size() || w.size() != w_global.size()) {
    throw ShapeError("add_regularizers: length mismatch");
  }
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    gradient[i] += mu * (w[i] - w_global[i]) + weight_decay * w[i];
  }
}

LocalResult local_train(ClientState& client, model::AttentionUNet& model, std::span<const double> global_weights,
                        int round, const FedConfig& cfg) {
  if (client.train.empty()) {
    throw ConfigError("data.clients", "client " + std::to_string(client.id + 1) + " has no training data");
  }
  client.optimizer = Adam(cfg.adam());
  LocalResult result;
  result.weights.assign(global_weights.begin(), global_weights.end());
  const double mu = cfg.effective_mu();
  const int epochs = cfg.epochs_for(client.id);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& batch : epoch_batches(client.train, cfg, client.id, round, epoch)) {
      model.set_weights(result.weights);
      auto lg = loss_and_gradient(model, batch);
      add_regularizers(lg.gradient, result.weights, global_weights, mu, cfg.weight_decay);
      client.optimizer.step(result.weights, lg.gradient);
      ++result.steps;
    }
  }
  model.set_weights(result.weights);
  model.zero_grad();
  result.metrics = evaluate(model, client.test, static_cast<std::size_t>(cfg.batch_size));
  return result;
}

std::vector<double> aggregate(std::span<const WeightedUpdate> updates) {
  if (updates.empty()) throw UsageError("aggregate: no client updates");
  const std::size_t len = updates.front().weights.size();
  std::uint64_t total = 0;
  for (const auto& u : updates) {
    if (u.weights.size() != len) {
      throw ShapeError("aggregate: update lengths differ (" + std::to_string(len) + " vs " +
                       std::to_string(u.weights.size()) + ")");
    }
    if (u.sample_count == 0) throw UsageError("aggregate: sample count must be positive");
    total += u.sample_count;
  }
  std::vector<double> share(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    share[i] = static_cast<double>(updates[i].sample_count) / static_cast<double>(total);
  }
  // Offsets from the smallest term keep the result inside the convex hull and
  // make identical inputs map to themselves exactly.
  std::vector<double> out(len);
  std::vector<std::pair<double, double>> terms(updates.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t i = 0; i < updates.size(); ++i) terms[i] = {updates[i].weights[k], share[i]};
    std::sort(terms.begin(), terms.end());
    const double base = terms.front().first;
    double acc = 0.0;
    for (std::size_t i = 1; i < terms.size(); ++i) acc += terms[i].second * (terms[i].first - base);
    out[k] = base + acc;
  }
  return out;
}

metrics::ConfusionCounts evaluate_counts(const model::AttentionUNet& model, const data::Dataset& dataset,
                                         std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("evaluate: batch size must be positive");
  numerics::NoGradGuard no_grad;
  metrics::ConfusionCounts counts;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, dataset.size() - start);
    const auto batch = data::make_batch(std::span<const data::Sample>(dataset).subspan(start, n));
    const numerics::Tensor prediction = model.forward(batch.images);
    counts += metrics::confusion(prediction, batch.masks);
  }
  return counts;
}

metrics::MetricsRow evaluate(const model::AttentionUNet& model, const data::Dataset& dataset, std::size_t batch_size) {
  if (dataset.empty()) throw UsageError("evaluate: empty dataset");
  return metrics::metrics_from_counts(evaluate_counts(model, dataset, batch_size));
}

RoundReport run_round(GlobalState& global, std::vector<ClientState>& clients, const model::AttentionUNet& prototype,
                      const data::Dataset& server_test, const FedConfig& cfg, const RoundHooks& hooks) {
  if (clients.empty()) throw UsageError("run_round: no clients");
  if (global.round_index >= cfg.rounds) throw UsageError("run_round: all configured rounds are complete");
  if (global.weights.size() != prototype.parameter_count()) {
    throw ShapeError("run_round: global weight vector does not match the model");
  }
  const auto start = std::chrono::steady_clock::now();
  const int round = global.round_index;
  std::vector<LocalResult> results(clients.size());

  auto train_one = [&](std::size_t i, model::AttentionUNet& scratch) {
    if (hooks.on_client_start) hooks.on_client_start(clients[i].id, global.weights);
    results[i] = local_train(clients[i], scratch, global.weights, round, cfg);
    if (hooks.on_client_done) hooks.on_client_done(clients[i].id, results[i]);
  };

  if (cfg.sequential || clients.size() == 1) {
    auto scratch = prototype.clone();
    for (std::size_t i = 0; i < clients.size(); ++i) train_one(i, scratch);
  } else {
    std::vector<std::exception_ptr> errors(clients.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          auto scratch = prototype.clone();
          train_one(i, scratch);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<WeightedUpdate> updates;
  for (std::size_t i = 0; i < clients.size(); ++i) updates.push_back({results[i].weights, clients[i].sample_count()});
  global.weights = aggregate(updates);

  auto evaluator = prototype.clone();
  evaluator.set_weights(global.weights);
  RoundReport report;
  report.round = round + 1;
  report.server_metrics = evaluate(evaluator, server_test, static_cast<std::size_t>(cfg.batch_size));
  for (const auto& r : results) report.per_client_metrics.push_back(r.metrics);
  global.history.push_back(report.server_metrics);
  global.round_index = round + 1;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

void check_extents(const data::Dataset& d, std::size_t divisor) {
  for (const auto& s : d) {
    if (s.height % divisor != 0 || s.width % divisor != 0) {
      throw ConfigError("data.image_size", "image extent " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                                               " is not divisible by 2^model.depth = " + std::to_string(divisor));
    }
  }
}

}  // namespace

std::vector<RoundReport> run_federation(const FedConfig& cfg, const model::ModelConfig& model_cfg,
                                        const data::Partition& partition, const RoundCallback& on_round,
                                        const RoundHooks& hooks) {
  cfg.validate();
  model_cfg.validate();
  if (partition.clients.empty()) throw ConfigError("data.clients", "at least one client is required");
  if (partition.server_test.empty()) throw ConfigError("data.server", "server test set is empty");
  for (const auto& c : partition.clients) check_extents(c, model_cfg.spatial_divisor());
  check_extents(partition.server_test, model_cfg.spatial_divisor());

  const model::AttentionUNet prototype(model_cfg);
  GlobalState global;
  global.weights = prototype.get_weights();
  auto clients = make_clients(partition.clients, cfg);
  std::vector<RoundReport> reports;
  while (global.round_index < cfg.rounds) {
    reports.push_back(run_round(global, clients, prototype, partition.server_test, cfg, hooks));
    if (on_round) on_round(reports.back(), global);
  }
  return reports;
}

std::vector<RoundReport> run_federation(const FedConfig& cfg, const model::ModelConfig& model_cfg,
                                        const data::PartitionPlan& plan, const RoundCallback& on_round,
                                        const RoundHooks& hooks) {
  cfg.validate();
  model_cfg.validate();
  plan.validate();
  return run_federation(cfg, model_cfg, data::build_partition(plan), on_round, hooks);
}

}  // namespace fedseg::fed
