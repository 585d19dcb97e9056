#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <span>
#include <vector>

#include "fedseg/data/augment.hpp"
#include "fedseg/data/partition.hpp"
#include "fedseg/fed/adam.hpp"
#include "fedseg/metrics/metrics.hpp"
#include "fedseg/model/attention_unet.hpp"

namespace fedseg::fed {

enum class Algorithm { fedprox, fedavg };

struct FedConfig {
  int rounds = 6;
  int local_epochs = 10;
  /// Optional per-client override of local_epochs, indexed by client id.
  std::vector<int> local_epochs_per_client;
  double mu = 0.1;
  double weight_decay = 0.001;
  double adam_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  std::uint64_t seed = 0;
  /// Held-out share of each client's data used for client metrics.
  double test_fraction = 0.2;
  /// Clients train one after another in id order. Parallel mode gives the
  /// same results on every platform tested but is not guaranteed to.
  bool sequential = true;
  /// fedavg drops the proximal term regardless of mu.
  Algorithm algorithm = Algorithm::fedprox;
  data::AugmentationConfig augmentation;

  void validate() const;
  int epochs_for(std::size_t client_id) const;
  double effective_mu() const { return algorithm == Algorithm::fedavg ? 0.0 : mu; }
  AdamOptions adam() const { return {adam_lr, adam_beta1, adam_beta2, adam_eps}; }
};

std::string_view algorithm_name(Algorithm a);
std::optional<Algorithm> parse_algorithm(std::string_view name);

struct ClientState {
  std::size_t id = 0;
  data::Dataset train;
  data::Dataset test;
  Adam optimizer;

  /// n_i in the aggregation weights.
  std::size_t sample_count() const { return train.size(); }
};

/// Splits each client dataset into train/test (label-stratified, seeded per
/// client). Throws ConfigError when a client has fewer than 5 samples.
std::vector<ClientState> make_clients(const std::vector<data::Dataset>& datasets, const FedConfig& cfg);

/// Seed of the stream that shuffles and augments one client epoch.
std::uint64_t epoch_stream_seed(const FedConfig& cfg, std::size_t client_id, int round, int epoch);

/// One epoch of mini-batches: the train set is shuffled with the epoch
/// stream, each sample is then augmented in shuffled order from the same
/// stream, and consecutive runs of batch_size samples form the batches (the
/// last one may be short).
std::vector<data::Batch> epoch_batches(const data::Dataset& train, const FedConfig& cfg, std::size_t client_id,
                                       int round, int epoch);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Soft Dice loss of `model` on `batch` and its gradient in parameter order.
LossAndGradient loss_and_gradient(model::AttentionUNet& model, const data::Batch& batch);

/// gradient += mu (w - w_global) + weight_decay * w
void add_regularizers(std::span<double> gradient, std::span<const double> w, std::span<const double> w_global,
                      double mu, double weight_decay);

struct LocalResult {
  std::vector<double> weights;
  metrics::MetricsRow metrics;  // on the client's held-out split, before aggregation
  std::size_t steps = 0;
};

/// Local training for round `round` (0-based). `model` is scratch storage with
/// the global architecture; its weights are overwritten. The optimizer is
/// reset first.
LocalResult local_train(ClientState& client, model::AttentionUNet& model, std::span<const double> global_weights,
                        int round, const FedConfig& cfg);

struct WeightedUpdate {
  std::span<const double> weights;
  std::size_t sample_count = 0;
};

/// sum_i (n_i / N) w_i, coordinate by coordinate. The terms of each
/// coordinate are added in sorted order, so the result does not depend on the
/// order of `updates`.
std::vector<double> aggregate(std::span<const WeightedUpdate> updates);

/// Micro-averaged counts of `model` over `dataset` without recording a graph.
metrics::ConfusionCounts evaluate_counts(const model::AttentionUNet& model, const data::Dataset& dataset,
                                         std::size_t batch_size = 16);
metrics::MetricsRow evaluate(const model::AttentionUNet& model, const data::Dataset& dataset,
                             std::size_t batch_size = 16);

struct GlobalState {
  int round_index = 0;  // completed rounds
  std::vector<double> weights;
  std::vector<metrics::MetricsRow> history;
};

struct RoundReport {
  int round = 0;  // 1-based
  metrics::MetricsRow server_metrics;
  std::vector<metrics::MetricsRow> per_client_metrics;
  double wall_time = 0.0;  // seconds
};

struct RoundHooks {
  /// Called before each client trains, with the weights it starts from.
  std::function<void(std::size_t client_id, std::span<const double> start_weights)> on_client_start;
  /// Called after each client trains.
  std::function<void(std::size_t client_id, const LocalResult&)> on_client_done;
};

/// One communication round: local training on every client from the current
/// global weights, aggregation, server evaluation. `prototype` fixes the
/// architecture; its weights are not used.
RoundReport run_round(GlobalState& global, std::vector<ClientState>& clients, const model::AttentionUNet& prototype,
                      const data::Dataset& server_test, const FedConfig& cfg, const RoundHooks& hooks = {});

using RoundCallback = std::function<void(const RoundReport&, const GlobalState&)>;

/// Builds the model from `model_cfg`, splits the clients and runs cfg.rounds
/// rounds.
std::vector<RoundReport> run_federation(const FedConfig& cfg, const model::ModelConfig& model_cfg,
                                        const data::Partition& partition, const RoundCallback& on_round = {},
                                        const RoundHooks& hooks = {});
/// Materializes `plan` with synthetic phantoms first.
std::vector<RoundReport> run_federation(const FedConfig& cfg, const model::ModelConfig& model_cfg,
                                        const data::PartitionPlan& plan, const RoundCallback& on_round = {},
                                        const RoundHooks& hooks = {});

}  // namespace fedseg::fed
