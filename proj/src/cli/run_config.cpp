#include "fedseg/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "fedseg/error.hpp"

namespace fedseg::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  const auto* first = v.data();
  const auto* last = v.data() + v.size();
  const auto res = std::from_chars(first, last, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ConfigError(std::string(key), "cannot parse '" + v + "' as a number");
  }
  return out;
}

int parse_int(std::string_view key, std::string_view text) { return parse_number<int>(key, text); }
double parse_double(std::string_view key, std::string_view text) { return parse_number<double>(key, text); }
std::uint64_t parse_u64(std::string_view key, std::string_view text) { return parse_number<std::uint64_t>(key, text); }

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + v + "'");
}

template <typename T>
std::string num(T value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string boolean(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FEDSEG_NUM_FIELD(KEY, MEMBER, PARSE)                                            \
  Field {                                                                               \
    KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = PARSE(KEY, v); },            \
        [](const RunConfig& c) { return num(c.MEMBER); }                                \
  }
#define FEDSEG_BOOL_FIELD(KEY, MEMBER)                                                  \
  Field {                                                                               \
    KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_bool(KEY, v); },       \
        [](const RunConfig& c) { return boolean(c.MEMBER); }                            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      FEDSEG_NUM_FIELD("fed.rounds", fed.rounds, parse_int),
      FEDSEG_NUM_FIELD("fed.local_epochs", fed.local_epochs, parse_int),
      Field{"fed.local_epochs_per_client",
            [](RunConfig& c, std::string_view v) {
              c.fed.local_epochs_per_client.clear();
              std::stringstream ss{std::string(v)};
              std::string item;
              while (std::getline(ss, item, ',')) {
                if (trim(item).empty()) continue;
                c.fed.local_epochs_per_client.push_back(parse_int("fed.local_epochs_per_client", item));
              }
            },
            [](const RunConfig& c) {
              std::string out;
              for (int e : c.fed.local_epochs_per_client) out += (out.empty() ? "" : ",") + num(e);
              return out;
            }},
      FEDSEG_NUM_FIELD("fed.mu", fed.mu, parse_double),
      FEDSEG_NUM_FIELD("fed.weight_decay", fed.weight_decay, parse_double),
      FEDSEG_NUM_FIELD("fed.adam_lr", fed.adam_lr, parse_double),
      FEDSEG_NUM_FIELD("fed.adam_beta1", fed.adam_beta1, parse_double),
      FEDSEG_NUM_FIELD("fed.adam_beta2", fed.adam_beta2, parse_double),
      FEDSEG_NUM_FIELD("fed.adam_eps", fed.adam_eps, parse_double),
      FEDSEG_NUM_FIELD("fed.batch_size", fed.batch_size, parse_int),
      FEDSEG_NUM_FIELD("fed.seed", fed.seed, parse_u64),
      FEDSEG_NUM_FIELD("fed.test_fraction", fed.test_fraction, parse_double),
      FEDSEG_BOOL_FIELD("fed.sequential", fed.sequential),
      Field{"fed.algorithm",
            [](RunConfig& c, std::string_view v) {
              const auto a = fed::parse_algorithm(trim(v));
              if (!a) throw ConfigError("fed.algorithm", "expected fedprox or fedavg, got '" + trim(v) + "'");
              c.fed.algorithm = *a;
            },
            [](const RunConfig& c) { return std::string(fed::algorithm_name(c.fed.algorithm)); }},
      FEDSEG_NUM_FIELD("model.depth", model.depth, parse_int),
      FEDSEG_NUM_FIELD("model.base_channels", model.base_channels, parse_int),
      FEDSEG_BOOL_FIELD("model.attention", model.attention_enabled),
      FEDSEG_NUM_FIELD("model.init_seed", model.init_seed, parse_u64),
      Field{"data.source",
            [](RunConfig& c, std::string_view v) {
              const std::string s = trim(v);
              if (s == "synthetic") c.source = DataSource::synthetic;
              else if (s == "directory") c.source = DataSource::directory;
              else throw ConfigError("data.source", "expected synthetic or directory, got '" + s + "'");
            },
            [](const RunConfig& c) { return std::string(c.source == DataSource::synthetic ? "synthetic" : "directory"); }},
      Field{"data.dir", [](RunConfig& c, std::string_view v) { c.data_dir = trim(v); },
            [](const RunConfig& c) { return c.data_dir; }},
      FEDSEG_NUM_FIELD("data.image_size", partition.image_size, parse_int),
      FEDSEG_NUM_FIELD("data.scale", partition.scale, parse_double),
      FEDSEG_NUM_FIELD("data.seed", partition.seed, parse_u64),
      Field{"data.clients",
            [](RunConfig& c, std::string_view v) {
              c.partition.clients.clear();
              std::stringstream ss{std::string(v)};
              std::string item;
              while (std::getline(ss, item, ';')) {
                if (trim(item).empty()) continue;
                c.partition.clients.push_back(data::parse_composition(item, "data.clients"));
              }
            },
            [](const RunConfig& c) {
              std::string out;
              for (const auto& comp : c.partition.clients) out += (out.empty() ? "" : "; ") + data::format_composition(comp);
              return out;
            }},
      Field{"data.server",
            [](RunConfig& c, std::string_view v) { c.partition.server_test = data::parse_composition(std::string(v), "data.server"); },
            [](const RunConfig& c) { return data::format_composition(c.partition.server_test); }},
      FEDSEG_BOOL_FIELD("augment.enabled", fed.augmentation.enabled),
      FEDSEG_NUM_FIELD("augment.flip_horizontal_p", fed.augmentation.flip_horizontal_p, parse_double),
      FEDSEG_NUM_FIELD("augment.flip_vertical_p", fed.augmentation.flip_vertical_p, parse_double),
      FEDSEG_NUM_FIELD("augment.rotation_deg", fed.augmentation.rotation_deg, parse_double),
      FEDSEG_NUM_FIELD("augment.translate_frac", fed.augmentation.translate_frac, parse_double),
      FEDSEG_NUM_FIELD("augment.scale_min", fed.augmentation.scale_min, parse_double),
      FEDSEG_NUM_FIELD("augment.scale_max", fed.augmentation.scale_max, parse_double),
      FEDSEG_NUM_FIELD("augment.contrast_min", fed.augmentation.contrast_min, parse_double),
      FEDSEG_NUM_FIELD("augment.contrast_max", fed.augmentation.contrast_max, parse_double),
      FEDSEG_NUM_FIELD("augment.brightness_delta", fed.augmentation.brightness_delta, parse_double),
      FEDSEG_NUM_FIELD("augment.seed", fed.augmentation.seed, parse_u64),
      Field{"output.dir", [](RunConfig& c, std::string_view v) { c.output_dir = trim(v); },
            [](const RunConfig& c) { return c.output_dir; }},
  };
  return table;
}

#undef FEDSEG_NUM_FIELD
#undef FEDSEG_BOOL_FIELD

}  // namespace

void RunConfig::validate() const {
  fed.validate();
  model.validate();
  partition.validate();
  if (model.in_channels != 1 || model.out_channels != 1) {
    throw ConfigError("model", "grayscale images and binary masks need 1 input and 1 output channel");
  }
  if (partition.image_size % static_cast<int>(model.spatial_divisor()) != 0) {
    throw ConfigError("data.image_size", std::to_string(partition.image_size) + " is not divisible by 2^model.depth = " +
                                             std::to_string(model.spatial_divisor()));
  }
  if (source == DataSource::directory && data_dir.empty()) {
    throw ConfigError("data.dir", "required when data.source = directory");
  }
  if (output_dir.empty()) throw ConfigError("output.dir", "must not be empty");
}

void RunConfig::set_seed(std::uint64_t seed) {
  fed.seed = seed;
  model.init_seed = seed;
  partition.seed = seed;
  fed.augmentation.seed = seed;
}

RunConfig default_run_config() {
  RunConfig c;
  c.set_seed(7);
  return c;
}

std::span<const std::string_view> run_config_keys() {
  static const std::vector<std::string_view> keys = [] {
    std::vector<std::string_view> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError(std::string(key), "unknown configuration key");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config = default_run_config();
  std::set<std::string> seen;
  std::stringstream ss{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value', got '" + trim(line) + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(key, "set more than once");
    apply_setting(config, key, std::string_view(line).substr(eq + 1));
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace fedseg::cli
