#include "fedseg/cli/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fedseg/cli/gradcheck_suite.hpp"
#include "fedseg/data/bus_dataset.hpp"
#include "fedseg/data/phantom.hpp"
#include "fedseg/error.hpp"
#include "fedseg/fed/fedprox.hpp"
#include "fedseg/model/checkpoint.hpp"
#include "fedseg/numerics/tensor.hpp"

namespace fedseg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kGenDataTag = 0x47454e44ULL;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Runs `body`, mapping exceptions to exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

RunConfig config_from_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--manifest", "cannot read " + path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  if (!manifest.contains("config") || !manifest["config"].is_object()) {
    throw FormatError("manifest " + path.string() + " has no config object");
  }
  RunConfig config = default_run_config();
  for (const auto& [key, value] : manifest["config"].items()) {
    if (!value.is_string()) throw FormatError("manifest config value for " + key + " is not a string");
    apply_setting(config, key, value.get<std::string>());
  }
  return config;
}

json config_json(const RunConfig& config) {
  json out = json::object();
  std::istringstream lines(format_run_config(config));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

std::string format_metrics_csv(const metrics::MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", row.dice_loss, row.iou, row.sensitivity,
                row.specificity, row.f1, row.accuracy);
  return buf;
}

data::Partition materialize_partition(const RunConfig& config) {
  if (config.source == DataSource::synthetic) return data::build_partition(config.partition);
  data::LoadReport report;
  const auto pool = data::load_bus_directory(config.data_dir, config.partition.image_size, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: skipped " << w << "\n";
  return data::build_partition(config.partition, pool);
}

data::GrayImage render_overlay(const data::Sample& sample, std::span<const double> probabilities) {
  const int h = sample.height, w = sample.width;
  if (probabilities.size() != sample.image.size()) throw ShapeError("render_overlay: prediction size mismatch");
  data::GrayImage img{w, h, std::vector<std::uint8_t>(sample.image.size())};
  for (std::size_t i = 0; i < sample.image.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(sample.image[i], 0.0, 1.0) * 255.0));
  }
  auto boundary = [&](auto&& inside) {
    std::vector<bool> edge(sample.image.size(), false);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!inside(y * w + x)) continue;
        const bool border = x == 0 || y == 0 || x == w - 1 || y == h - 1 || !inside(y * w + x - 1) ||
                            !inside(y * w + x + 1) || !inside((y - 1) * w + x) || !inside((y + 1) * w + x);
        edge[static_cast<std::size_t>(y * w + x)] = border;
      }
    }
    return edge;
  };
  const auto truth_edge = boundary([&](int i) { return sample.mask[static_cast<std::size_t>(i)] != 0; });
  const auto pred_edge = boundary([&](int i) { return probabilities[static_cast<std::size_t>(i)] >= 0.5; });
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (truth_edge[i]) img.pixels[i] = 0;
    if (pred_edge[i]) img.pixels[i] = 255;
  }
  return img;
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig config = !options.manifest_path.empty() ? config_from_manifest(options.manifest_path)
                       : !options.config_path.empty() ? load_run_config(options.config_path)
                                                      : default_run_config();
    if (options.seed) config.set_seed(*options.seed);
    if (!options.out_dir.empty()) config.output_dir = options.out_dir;
    if (options.sequential) config.fed.sequential = *options.sequential;
    config.validate();

    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    const auto partition = materialize_partition(config);

    json manifest;
    manifest["tool"] = "fedseg";
    manifest["version"] = std::string(kVersion);
    manifest["started_at"] = utc_timestamp();
    manifest["mode"] = config.fed.sequential ? "sequential" : "parallel";
    manifest["seeds"] = {{"fed", config.fed.seed},
                         {"model_init", config.model.init_seed},
                         {"data", config.partition.seed},
                         {"augment", config.fed.augmentation.seed}};
    manifest["config"] = config_json(config);
    json sizes = json::array();
    for (const auto& c : partition.clients) sizes.push_back(c.size());
    manifest["data"] = {{"client_sizes", sizes}, {"server_test_size", partition.server_test.size()}};
    json checkpoints = json::array();
    for (int k = 1; k <= config.fed.rounds; ++k) checkpoints.push_back("round_" + std::to_string(k) + ".fpwt");
    manifest["artifacts"] = {{"rounds_csv", "rounds.csv"}, {"clients_csv", "clients.csv"}, {"checkpoints", checkpoints}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    std::ofstream rounds(dir / "rounds.csv", std::ios::binary);
    std::ofstream clients(dir / "clients.csv", std::ios::binary);
    if (!rounds || !clients) throw Error("cannot write CSV files under " + dir.string());
    rounds << kRoundsCsvHeader << "\n";
    clients << kClientsCsvHeader << "\n";

    model::AttentionUNet snapshot(config.model);
    out << "simulate: " << partition.clients.size() << " clients, " << partition.server_test.size()
        << " server test samples, " << snapshot.parameter_count() << " parameters\n";
    fed::run_federation(config.fed, config.model, partition, [&](const fed::RoundReport& r, const fed::GlobalState& g) {
      rounds << r.round << "," << format_metrics_csv(r.server_metrics) << "\n" << std::flush;
      for (std::size_t c = 0; c < r.per_client_metrics.size(); ++c) {
        clients << r.round << "," << (c + 1) << "," << format_metrics_csv(r.per_client_metrics[c]) << "\n";
      }
      clients.flush();
      snapshot.set_weights(g.weights);
      model::save_checkpoint(dir / ("round_" + std::to_string(r.round) + ".fpwt"), snapshot.parameters());
      char line[200];
      std::snprintf(line, sizeof line, "round %d: dice_loss %.4f  iou %.4f  accuracy %.4f  (%.1f s)\n", r.round,
                    r.server_metrics.dice_loss, r.server_metrics.iou, r.server_metrics.accuracy, r.wall_time);
      out << line << std::flush;
    });
    if (!rounds || !clients) throw Error("failed writing CSV files under " + dir.string());
    out << "wrote " << (dir / "rounds.csv").string() << "\n";
    return int{kExitOk};
  });
}

int cmd_gen_data(const GenDataOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (options.size < 4) throw ConfigError("--size", "must be >= 4");
    if (options.out_dir.empty()) throw ConfigError("--out", "required");
    const auto counts = data::parse_composition(options.counts, "--counts");
    data::Dataset dataset;
    std::map<data::Label, int> per_label;
    std::uint64_t id = 0;
    for (const auto& lc : counts) {
      for (int j = 0; j < lc.count; ++j, ++id) {
        Rng rng(derive_seed(options.seed, {kGenDataTag, id}));
        auto s = data::generate_phantom(lc.label, options.size, rng);
        s.id = id;
        dataset.push_back(std::move(s));
        ++per_label[lc.label];
      }
    }
    data::write_bus_directory(dataset, options.out_dir);
    for (data::Label l : data::kAllLabels) out << data::label_name(l) << ": " << per_label[l] << "\n";
    return int{kExitOk};
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig config = options.config_path.empty() ? default_run_config() : load_run_config(options.config_path);
    if (options.seed) config.set_seed(*options.seed);
    config.validate();
    if (options.checkpoint_path.empty()) throw ConfigError("--checkpoint", "required");

    model::AttentionUNet net(config.model);
    model::apply_checkpoint(net, model::load_checkpoint(options.checkpoint_path));

    data::Dataset dataset;
    if (!options.data_dir.empty()) {
      data::LoadReport report;
      dataset = data::load_bus_directory(options.data_dir, config.partition.image_size, &report);
      for (const auto& w : report.warnings) err << "warning: skipped " << w << "\n";
    } else {
      dataset = materialize_partition(config).server_test;
    }
    if (dataset.empty()) throw ConfigError("--data", "no samples to evaluate");

    const auto batch = static_cast<std::size_t>(config.fed.batch_size);
    const auto row = fed::evaluate(net, dataset, batch);
    out << kRoundsCsvHeader.substr(kRoundsCsvHeader.find(',') + 1) << "\n" << format_metrics_csv(row) << "\n";

    if (!options.overlays_dir.empty()) {
      fs::create_directories(options.overlays_dir);
      numerics::NoGradGuard no_grad;
      for (const auto& s : dataset) {
        const auto b = data::make_batch(std::span<const data::Sample>(&s, 1));
        const numerics::Tensor prediction = net.forward(b.images);
        char name[64];
        std::snprintf(name, sizeof name, "overlay_%s_%06llu.png", std::string(data::label_name(s.label)).c_str(),
                      static_cast<unsigned long long>(s.id));
        data::write_png_gray(fs::path(options.overlays_dir) / name, render_overlay(s, prediction.data()));
      }
    }
    return int{kExitOk};
  });
}

int cmd_gradcheck(std::uint64_t seed, bool inject_fault, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    struct FaultScope {
      explicit FaultScope(bool on) { numerics::testing::set_backward_fault(on); }
      ~FaultScope() { numerics::testing::set_backward_fault(false); }
    } fault(inject_fault);
    const auto entries = run_gradcheck_suite(seed);
    out << "op,max_rel_error,threshold,status\n";
    bool ok = true;
    for (const auto& e : entries) {
      char line[160];
      std::snprintf(line, sizeof line, "%s,%.3e,%.0e,%s\n", e.name.c_str(), e.max_rel_error, e.threshold,
                    e.passed() ? "pass" : "FAIL");
      out << line;
      ok = ok && e.passed();
    }
    out << (ok ? "gradcheck: all " + std::to_string(entries.size()) + " checks passed\n"
               : std::string("gradcheck: FAILED\n"));
    return ok ? int{kExitOk} : int{kExitRuntime};
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated attention U-Net segmentation simulator", "fedseg"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimulateOptions sim;
  std::uint64_t sim_seed = 0;
  bool sim_sequential = false, sim_parallel = false;
  auto* simulate = app.add_subcommand("simulate", "Run a federation and write rounds.csv, clients.csv, checkpoints");
  simulate->add_option("--config", sim.config_path, "Config file (flat key = value)")->check(CLI::ExistingFile);
  simulate->add_option("--manifest", sim.manifest_path, "Re-run the config recorded in a manifest.json")
      ->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out_dir, "Output directory (overrides output.dir)");
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Set every seed");
  auto* seq_flag = simulate->add_flag("--sequential", sim_sequential, "Train clients one by one (default)");
  simulate->add_flag("--parallel", sim_parallel, "Train clients on separate threads")->excludes(seq_flag);
  simulate->get_option("--manifest")->excludes("--config");

  GenDataOptions gen;
  auto* gen_data = app.add_subcommand("gen-data", "Write synthetic phantoms in the BUS directory layout");
  gen_data->add_option("--counts", gen.counts, "Per-label counts, e.g. benign:5,normal:2")->required();
  gen_data->add_option("--size", gen.size, "Image extent in pixels")->capture_default_str();
  gen_data->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_data->add_option("--out", gen.out_dir, "Output root")->required();

  EvalOptions ev;
  std::uint64_t ev_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and print one metrics row");
  eval->add_option("--checkpoint", ev.checkpoint_path, "FPWT weight file")->required();
  eval->add_option("--config", ev.config_path, "Config of the run that produced the checkpoint")
      ->check(CLI::ExistingFile);
  eval->add_option("--data", ev.data_dir, "BUS-layout directory (default: the config's server test set)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--overlays", ev.overlays_dir, "Write per-image boundary overlays here");
  auto* ev_seed_opt = eval->add_option("--seed", ev_seed, "Set every seed");

  std::uint64_t gc_seed = 1;
  bool inject_fault = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gradcheck->add_option("--seed", gc_seed, "Input seed")->capture_default_str();
  gradcheck->add_flag("--inject-fault", inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? int{kExitOk} : int{kExitInvalid};
  }

  if (simulate->parsed()) {
    if (*sim_seed_opt) sim.seed = sim_seed;
    if (sim_parallel) sim.sequential = false;
    if (sim_sequential) sim.sequential = true;
    return cmd_simulate(sim, out, err);
  }
  if (gen_data->parsed()) return cmd_gen_data(gen, out, err);
  if (eval->parsed()) {
    if (*ev_seed_opt) ev.seed = ev_seed;
    return cmd_eval(ev, out, err);
  }
  return cmd_gradcheck(gc_seed, inject_fault, out, err);
}

}  // namespace fedseg::cli
