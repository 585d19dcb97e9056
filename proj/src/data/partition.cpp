#include "fedseg/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "fedseg/data/phantom.hpp"
#include "fedseg/error.hpp"
#include "fedseg/rng.hpp"

namespace fedseg::data {

Composition parse_composition(const std::string& text, const std::string& key) {
  Composition out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key, "expected label:count, got '" + item + "'");
    const auto label = parse_label(item.substr(0, colon));
    if (!label) throw ConfigError(key, "unknown label '" + item.substr(0, colon) + "'");
    int count = 0;
    try {
      std::size_t used = 0;
      count = std::stoi(item.substr(colon + 1), &used);
      if (used != item.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError(key, "bad count in '" + item + "'");
    }
    if (count < 0) throw ConfigError(key, "count must be non-negative in '" + item + "'");
    out.push_back({*label, count});
  }
  if (out.empty()) throw ConfigError(key, "empty composition");
  return out;
}

std::string format_composition(const Composition& composition) {
  std::string out;
  for (const auto& lc : composition) {
    if (!out.empty()) out += ',';
    out += std::string(label_name(lc.label)) + ":" + std::to_string(lc.count);
  }
  return out;
}

PartitionPlan PartitionPlan::paper_default() {
  PartitionPlan plan;
  plan.clients = {
      {{Label::benign, 400}, {Label::normal, 50}},
      {{Label::malignant, 200}, {Label::normal, 50}},
      {{Label::benign, 110}, {Label::malignant, 53}},
  };
  plan.server_test = {{Label::benign, 97}, {Label::malignant, 23}, {Label::normal, 34}};
  return plan;
}

void PartitionPlan::validate() const {
  if (clients.empty()) throw ConfigError("data.clients", "at least one client is required");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("data.scale", "must be positive");
  if (image_size < 4) throw ConfigError("data.image_size", "must be >= 4");
  for (std::size_t c = 0; c < clients.size(); ++c) {
    int total = 0;
    for (const auto& lc : clients[c]) {
      if (lc.count < 0) throw ConfigError("data.clients", "negative count");
      total += lc.count;
    }
    if (total == 0) throw ConfigError("data.clients", "client " + std::to_string(c + 1) + " has no samples");
  }
  int server = 0;
  for (const auto& lc : server_test) server += lc.count;
  if (server == 0) throw ConfigError("data.server", "server test set is empty");
}

int scaled_count(int count, double scale) {
  if (count <= 0) return 0;
  return std::max(1, static_cast<int>(std::lround(count * scale)));
}

namespace {

// Expands a composition into the label sequence it describes.
std::vector<Label> expand(const Composition& c, double scale) {
  std::vector<Label> labels;
  for (const auto& lc : c) labels.insert(labels.end(), static_cast<std::size_t>(scaled_count(lc.count, scale)), lc.label);
  return labels;
}

}  // namespace

Partition build_partition(const PartitionPlan& plan) {
  plan.validate();
  Partition out;
  std::uint64_t next_id = 0;
  auto materialize = [&](const Composition& c) {
    Dataset d;
    for (Label label : expand(c, plan.scale)) {
      const std::uint64_t id = next_id++;
      Rng rng(derive_seed(plan.seed, {0x5048414eULL, id}));
      Sample s = generate_phantom(label, plan.image_size, rng);
      s.id = id;
      d.push_back(std::move(s));
    }
    return d;
  };
  for (const auto& c : plan.clients) out.clients.push_back(materialize(c));
  out.server_test = materialize(plan.server_test);
  return out;
}

Partition build_partition(const PartitionPlan& plan, const Dataset& pool) {
  plan.validate();
  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < pool.size(); ++i) by_label[pool[i].label].push_back(i);
  Rng rng(derive_seed(plan.seed, {0x504f4f4cULL}));
  for (auto& [label, idx] : by_label) rng.shuffle(idx);
  std::map<Label, std::size_t> cursor;

  auto draw = [&](const Composition& c) {
    Dataset d;
    for (Label label : expand(c, plan.scale)) {
      auto& idx = by_label[label];
      auto& pos = cursor[label];
      if (pos >= idx.size()) {
        throw ConfigError("data.dir", "not enough " + std::string(label_name(label)) + " samples (" +
                                          std::to_string(idx.size()) + " available)");
      }
      d.push_back(pool[idx[pos++]]);
    }
    return d;
  };
  Partition out;
  for (const auto& c : plan.clients) out.clients.push_back(draw(c));
  out.server_test = draw(plan.server_test);
  return out;
}

Split train_test_split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (dataset.size() < 5) throw UsageError("train/test split needs at least 5 samples");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("fed.test_fraction", "must lie in (0, 1)");
  Rng rng(derive_seed(seed, {0x53504c54ULL}));
  std::vector<bool> in_test(dataset.size(), false);
  for (Label label : kAllLabels) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset[i].label == label) idx.push_back(i);
    }
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * idx.size())));
    for (std::size_t k = 0; k < std::min(n_test, idx.size()); ++k) in_test[idx[k]] = true;
  }
  Split split;
  for (std::size_t i = 0; i < dataset.size(); ++i) (in_test[i] ? split.test : split.train).push_back(dataset[i]);
  return split;
}

}  // namespace fedseg::data
