// Copyright 2026 The FedGreen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// \brief fedgreen CLI: solve, simulate, compare, toy-train, fit-kappa, and
/// codec-roundtrip subcommands over a shared configuration schema.
///
/// Exit codes: 0 success, 2 configuration error, 3 infeasible scenario or
/// failed simulation, 4 I/O error, 1 anything else.  All randomness flows
/// from --seed; identical flags produce byte-identical outputs.

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fedgreen/codec.hpp"
#include "fedgreen/config.hpp"
#include "fedgreen/grad.hpp"
#include "fedgreen/models.hpp"
#include "fedgreen/optimizer.hpp"
#include "fedgreen/report.hpp"
#include "fedgreen/sim.hpp"
#include "fedgreen/toy.hpp"

namespace {

using namespace fedgreen;

struct CommonFlags {
  std::string scenario_path;
  std::vector<std::string> set_entries;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

std::vector<std::pair<std::string, std::string>> collect_overrides(const CommonFlags& flags) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& entry : flags.set_entries) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("set", "expected key=value, got \"" + entry + "\"");
    overrides.emplace_back(entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (flags.seed_given) overrides.emplace_back("seed", std::to_string(flags.seed));
  return overrides;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--scenario", flags.scenario_path, "Configuration file (key=value or JSON)");
  cmd->add_option("--set", flags.set_entries, "Override a configuration key (key=value)")
      ->take_all();
  cmd->add_option("--seed", flags.seed, "Master seed (wins over --set and the file)")
      ->each([&flags](const std::string&) { flags.seed_given = true; });
}

std::string output_path(const std::string& dir, const std::string& name) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
  return (p / name).string();
}

/// Rebuilds the scenario for a specific seed: sampled populations are
/// redrawn, explicit device lists keep their hardware and reseed only the
/// stream-derived draws (channels, baseline ratios).
Scenario scenario_for_seed(const ResolvedConfig& base, std::uint64_t seed) {
  if (base.explicit_devices) {
    Scenario sc = base.scenario;
    sc.seed = seed;
    return sc;
  }
  Scenario sc = sample_scenario(static_cast<int>(base.scenario.devices.size()), seed,
                                base.scenario.sampling, base.scenario.config,
                                base.scenario.accuracy_model);
  sc.channel_mode = base.scenario.channel_mode;
  return sc;
}

std::map<std::string, std::string> manifest_entries(const ResolvedConfig& config,
                                                    const std::string& command) {
  std::map<std::string, std::string> entries = config.resolved;
  entries["run.command"] = command;
  return entries;
}

int cmd_solve(const CommonFlags& flags) {
  const ResolvedConfig config = parse_run_config(flags.scenario_path, collect_overrides(flags));
  const Scenario& sc = config.scenario;
  std::cout << "device_id,alpha,beta,f_hz,objective_share,feasible,boundary\n";
  for (const DeviceProfile& dev : sc.devices) {
    const CompressionPlan plan = solve_device(dev, sc.config, sc.accuracy_model);
    std::cout << dev.device_id << ',' << format_g9(plan.alpha) << ',' << format_g9(plan.beta)
              << ',' << format_g9(plan.f_hz) << ',' << format_g9(plan.objective_share) << ','
              << (plan.feasible ? 1 : 0) << ',' << plan_boundary_name(plan.boundary) << '\n';
  }
  return 0;
}

int cmd_simulate(const CommonFlags& flags, const std::string& strategy_name_arg, int rounds,
                 const std::string& out_dir) {
  const ResolvedConfig config = parse_run_config(flags.scenario_path, collect_overrides(flags));
  const Strategy strategy = strategy_from_name(strategy_name_arg);
  if (strategy == Strategy::uncompressed)
    throw ConfigError("strategy", "uncompressed applies to toy-train only");
  const int run_rounds = rounds > 0 ? rounds : config.scenario.config.global_rounds;

  const std::vector<RoundLedger> ledgers = run_modeled(config.scenario, strategy, run_rounds);
  emit_round_csv(ledgers, output_path(out_dir, "rounds.csv"));

  std::map<std::string, std::string> manifest = manifest_entries(config, "simulate");
  manifest["run.strategy"] = strategy_name_arg;
  manifest["run.rounds"] = std::to_string(run_rounds);
  write_manifest(manifest, output_path(out_dir, "manifest.txt"));
  return 0;
}

int cmd_compare(const CommonFlags& flags, std::vector<std::string> strategy_names, int rounds,
                int seed_count, int parallel, std::optional<double> target,
                const std::string& out_dir) {
  const ResolvedConfig config = parse_run_config(flags.scenario_path, collect_overrides(flags));
  if (strategy_names.empty())
    strategy_names = {"fedgreen", "random", "uniform", "selection"};
  std::vector<Strategy> strategies;
  for (const std::string& name : strategy_names) {
    const Strategy s = strategy_from_name(name);
    if (s == Strategy::uncompressed)
      throw ConfigError("strategy", "uncompressed applies to toy-train only");
    strategies.push_back(s);
  }
  if (seed_count < 1) throw ConfigError("seed-count", "must be at least 1");
  if (parallel < 1) throw ConfigError("parallel", "must be at least 1");
  const int run_rounds = rounds > 0 ? rounds : 1;

  const std::uint64_t base_seed = config.scenario.seed;
  std::vector<std::vector<CompareRow>> per_seed(static_cast<std::size_t>(seed_count));
  std::exception_ptr failure;
  std::atomic<int> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&]() {
    while (!abort.load()) {
      const int i = next.fetch_add(1);
      if (i >= seed_count) return;
      try {
        const Scenario sc = scenario_for_seed(config, base_seed + static_cast<std::uint64_t>(i));
        per_seed[static_cast<std::size_t>(i)] =
            compare_scenario(sc, strategies, run_rounds, target);
      } catch (...) {
        if (!abort.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };

  const int thread_count = std::min(parallel, seed_count);
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<CompareRow> rows;
  for (const auto& seed_rows : per_seed) rows.insert(rows.end(), seed_rows.begin(), seed_rows.end());
  emit_summary_csv(rows, output_path(out_dir, "summary.csv"));

  std::map<std::string, std::string> manifest = manifest_entries(config, "compare");
  std::string joined;
  for (const std::string& name : strategy_names) {
    if (!joined.empty()) joined += "+";
    joined += name;
  }
  manifest["run.strategies"] = joined;
  manifest["run.rounds"] = std::to_string(run_rounds);
  manifest["run.seed_count"] = std::to_string(seed_count);
  if (target.has_value()) manifest["run.target_contribution"] = format_g9(*target);
  write_manifest(manifest, output_path(out_dir, "manifest.txt"));
  return 0;
}

int cmd_toy_train(const CommonFlags& flags, const std::string& strategy_name_arg, int rounds,
                  const std::string& out_dir) {
  const ResolvedConfig config = parse_run_config(flags.scenario_path, collect_overrides(flags));
  ToyTrainSpec spec = config.toy;
  spec.strategy = strategy_from_name(strategy_name_arg);
  if (rounds > 0) spec.rounds = rounds;

  const ToyTrainResult result = run_toy_training(config.scenario, spec, config.compression);
  emit_toy_csv(result.test_accuracy, result.train_loss, output_path(out_dir, "toy.csv"));
  emit_round_csv(result.ledgers, output_path(out_dir, "rounds.csv"));

  std::map<std::string, std::string> manifest = manifest_entries(config, "toy-train");
  manifest["run.strategy"] = strategy_name_arg;
  manifest["run.rounds"] = std::to_string(spec.rounds);
  write_manifest(manifest, output_path(out_dir, "manifest.txt"));
  return 0;
}

int cmd_fit_kappa(const std::string& points_path) {
  std::vector<FitPoint> points;
  if (!points_path.empty()) {
    std::ifstream in(points_path, std::ios::binary);
    if (!in) throw IoError("cannot open points file: " + points_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t comma = line.find(',');
      if (comma == std::string::npos) continue;
      try {
        points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
      } catch (const std::exception&) {
        if (line_no == 1) continue;  // header row
        throw ConfigError("points", "line " + std::to_string(line_no) + ": expected alpha,accuracy");
      }
    }
    const AccuracyModel fit = fit_kappa(points);
    std::cout << "kappa1=" << format_g9(fit.kappa1) << "\nkappa2=" << format_g9(fit.kappa2)
              << "\nkappa3=" << format_g9(fit.kappa3) << "\nkappa4=" << format_g9(fit.kappa4)
              << '\n';
    return 0;
  }

  // Self-test: recover the reference constants from their own curve.
  const AccuracyModel reference;
  for (double alpha : {1.0, 1.5, 2.0, 3.0, 5.0})
    points.push_back({alpha, accuracy(reference, alpha)});
  const AccuracyModel fit = fit_kappa(points);
  double worst = 0.0;
  const double refs[4] = {reference.kappa1, reference.kappa2, reference.kappa3, reference.kappa4};
  const double fits[4] = {fit.kappa1, fit.kappa2, fit.kappa3, fit.kappa4};
  for (int i = 0; i < 4; ++i)
    worst = std::max(worst, std::abs(fits[i] - refs[i]) / std::max(1e-12, std::abs(refs[i])));
  std::cout << "kappa1=" << format_g9(fit.kappa1) << "\nkappa2=" << format_g9(fit.kappa2)
            << "\nkappa3=" << format_g9(fit.kappa3) << "\nkappa4=" << format_g9(fit.kappa4)
            << "\nmax_relative_error=" << format_g9(worst) << '\n';
  return worst <= 1e-3 ? 0 : 1;
}

int cmd_codec_roundtrip(int rounds) {
  if (rounds < 1) throw ConfigError("rounds", "must be at least 1");
  for (int i = 0; i < rounds; ++i) {
    Rng rng(derive_stream(0xC0DEC, static_cast<std::uint64_t>(i)));
    const int c_out = 1 + static_cast<int>(rng.next_u64() % 6);
    const int c_in = 1 + static_cast<int>(rng.next_u64() % 6);
    const int k = 1 + 2 * static_cast<int>(rng.next_u64() % 3);
    const std::vector<LayerShape> shapes = {
        {0, LayerKind::conv, c_out, c_in, k},
        {1, LayerKind::bias, c_out, 1, 1},
        {2, LayerKind::fully_connected, 3, c_out * 7, 1},
        {3, LayerKind::bias, 3, 1, 1},
    };
    const ModelGradient model = synthesize_model(shapes, 0x5eed + static_cast<std::uint64_t>(i), 8);
    const double alpha = 1.0 + 39.0 * rng.uniform();
    const CompressedModel compressed =
        compress_model(model, alpha, CompressionConfig{}, static_cast<std::uint64_t>(i));
    const std::vector<std::uint8_t> bytes = serialize_model(compressed.layers);
    const std::vector<CompressedGradient> parsed = parse_model(bytes);
    if (parsed.size() != compressed.layers.size()) throw SimError("layer count changed in flight");
    for (std::size_t l = 0; l < parsed.size(); ++l) {
      const GradientTensor a = decode(compressed.layers[l]);
      const GradientTensor b = decode(parsed[l]);
      if (a.values != b.values) throw SimError("round-trip mismatch in layer " + std::to_string(l));
    }
  }
  std::cout << rounds << " codec round trips exact\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedGreen gradient-compression codec and energy-aware FL simulator"};
  app.require_subcommand(1);

  CommonFlags solve_flags;
  CLI::App* solve = app.add_subcommand("solve", "Per-device compression plans");
  add_common_flags(solve, solve_flags);

  CommonFlags sim_flags;
  std::string sim_strategy = "fedgreen";
  int sim_rounds = 0;
  std::string sim_out = ".";
  CLI::App* simulate = app.add_subcommand("simulate", "Run modeled rounds, emit rounds.csv");
  add_common_flags(simulate, sim_flags);
  simulate->add_option("--strategy", sim_strategy, "fedgreen|random|uniform|selection");
  simulate->add_option("--rounds", sim_rounds, "Rounds (default: config.J)");
  simulate->add_option("--out", sim_out, "Output directory");

  CommonFlags cmp_flags;
  std::vector<std::string> cmp_strategies;
  int cmp_rounds = 0;
  int cmp_seed_count = 1;
  int cmp_parallel = 1;
  double cmp_target = 0.0;
  bool cmp_target_given = false;
  std::string cmp_out = ".";
  CLI::App* compare = app.add_subcommand("compare", "Strategy comparison, emit summary.csv");
  add_common_flags(compare, cmp_flags);
  compare->add_option("--strategy", cmp_strategies, "Strategy (repeatable; default all four)")
      ->take_all();
  compare->add_option("--rounds", cmp_rounds, "Rounds per run (default 1)");
  compare->add_option("--seed-count", cmp_seed_count, "Consecutive seeds to compare");
  compare->add_option("--parallel", cmp_parallel, "Worker threads over seeds");
  compare
      ->add_option("--target-contribution", cmp_target,
                   "Contribution target for energy_to_target (default 0.95x fedgreen)")
      ->each([&cmp_target_given](const std::string&) { cmp_target_given = true; });
  compare->add_option("--out", cmp_out, "Output directory");

  CommonFlags toy_flags;
  std::string toy_strategy = "fedgreen";
  int toy_rounds = 0;
  std::string toy_out = ".";
  CLI::App* toy = app.add_subcommand("toy-train", "End-to-end toy training through the codec");
  add_common_flags(toy, toy_flags);
  toy->add_option("--strategy", toy_strategy,
                  "fedgreen|random|uniform|selection|uncompressed");
  toy->add_option("--rounds", toy_rounds, "Rounds (default: toy.rounds)");
  toy->add_option("--out", toy_out, "Output directory");

  std::string fit_points;
  CLI::App* fit = app.add_subcommand("fit-kappa", "Fit accuracy constants from alpha,accuracy points");
  fit->add_option("--points", fit_points, "CSV of alpha,accuracy rows (default: self-test)");

  int codec_rounds = 100;
  CLI::App* codec = app.add_subcommand("codec-roundtrip", "Randomized wire-format self-test");
  codec->add_option("--rounds", codec_rounds, "Number of random round trips");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (solve->parsed()) return cmd_solve(solve_flags);
    if (simulate->parsed()) return cmd_simulate(sim_flags, sim_strategy, sim_rounds, sim_out);
    if (compare->parsed())
      return cmd_compare(cmp_flags, cmp_strategies, cmp_rounds, cmp_seed_count, cmp_parallel,
                         cmp_target_given ? std::optional<double>(cmp_target) : std::nullopt,
                         cmp_out);
    if (toy->parsed()) return cmd_toy_train(toy_flags, toy_strategy, toy_rounds, toy_out);
    if (fit->parsed()) return cmd_fit_kappa(fit_points);
    if (codec->parsed()) return cmd_codec_roundtrip(codec_rounds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const SimError& e) {
    std::cerr << "simulation error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
