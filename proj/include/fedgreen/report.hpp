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
/// \brief Result serialization: per-round CSV ledgers, strategy comparison
/// summaries, and the plain-text run manifest.
///
/// All numbers go through format_g9 (9 significant digits), newlines are
/// "\n", and rows are emitted in a canonical order, so equal inputs always
/// produce byte-identical files.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedgreen/config.hpp"
#include "fedgreen/errors.hpp"
#include "fedgreen/sim.hpp"

namespace fedgreen {

namespace detail {

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failure: " + path);
}

}  // namespace detail

/// Round ledger CSV.  One row per (round, device) plus one aggregate row per
/// round with device_id -1.  The last four columns are round-level values
/// repeated on every row of the round, so cumulative_energy_j is
/// non-decreasing over the whole file.  Device rows of devices that sat a
/// round out carry zeros and feasible=0.
inline void emit_round_csv(const std::vector<RoundLedger>& ledgers, const std::string& path) {
  std::ofstream out = detail::open_output(path);
  out << "round,device_id,alpha,f_hz,comm_energy_j,comp_energy_j,latency_s,feasible,"
         "total_energy_j,cumulative_energy_j,contribution,goal\n";
  for (const RoundLedger& ledger : ledgers) {
    const std::string round_tail = format_g9(ledger.total_energy_j) + "," +
                                   format_g9(ledger.cumulative_energy_j) + "," +
                                   format_g9(ledger.contribution) + "," +
                                   format_g9(ledger.goal);
    double comm_sum = 0.0;
    double comp_sum = 0.0;
    double latency_max = 0.0;
    bool all_feasible = true;
    for (const DeviceRoundRecord& rec : ledger.devices) {
      out << ledger.round_index << ',' << rec.device_id << ',' << format_g9(rec.alpha) << ','
          << format_g9(rec.f_hz) << ',' << format_g9(rec.comm_energy_j) << ','
          << format_g9(rec.comp_energy_j) << ',' << format_g9(rec.latency_s) << ','
          << (rec.feasible ? 1 : 0) << ',' << round_tail << '\n';
      comm_sum += rec.comm_energy_j;
      comp_sum += rec.comp_energy_j;
      latency_max = std::max(latency_max, rec.latency_s);
      if (rec.alpha >= 1.0 && !rec.feasible) all_feasible = false;
    }
    out << ledger.round_index << ",-1,0,0," << format_g9(comm_sum) << ','
        << format_g9(comp_sum) << ',' << format_g9(latency_max) << ','
        << (all_feasible ? 1 : 0) << ',' << round_tail << '\n';
  }
  detail::finish_output(out, path);
}

struct CompareRow {
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::fedgreen;
  double goal = 0.0;          // final round
  double contribution = 0.0;  // final round
  double total_energy_j = 0.0;
  std::optional<double> energy_to_target_j;
  std::optional<double> energy_ratio;  // this strategy / fedgreen, when fedgreen ran
  bool best = false;
};

/// Runs every strategy on one scenario and assembles comparison rows.  The
/// contribution target defaults to 0.95x the fedgreen run's final value.
/// When fedgreen is among the strategies it must hold the goal argmax;
/// anything else indicates a broken solver and raises SimError.
inline std::vector<CompareRow> compare_scenario(const Scenario& scenario,
                                                const std::vector<Strategy>& strategies,
                                                int rounds,
                                                std::optional<double> target_contribution) {
  if (strategies.empty()) throw DomainError("compare needs at least one strategy");
  std::vector<std::vector<RoundLedger>> runs;
  runs.reserve(strategies.size());
  for (Strategy s : strategies) runs.push_back(run_modeled(scenario, s, rounds));

  std::optional<std::size_t> fedgreen_index;
  for (std::size_t i = 0; i < strategies.size(); ++i)
    if (strategies[i] == Strategy::fedgreen) fedgreen_index = i;

  double target = 0.0;
  if (target_contribution.has_value()) {
    target = *target_contribution;
  } else {
    if (!fedgreen_index.has_value())
      throw ConfigError("target-contribution",
                        "an explicit target is required when fedgreen is not compared");
    target = 0.95 * runs[*fedgreen_index].back().contribution;
  }

  std::vector<CompareRow> rows(strategies.size());
  double best_goal = -1e300;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    CompareRow& row = rows[i];
    row.seed = scenario.seed;
    row.strategy = strategies[i];
    row.goal = runs[i].back().goal;
    row.contribution = runs[i].back().contribution;
    row.total_energy_j = runs[i].back().cumulative_energy_j;
    row.energy_to_target_j = energy_to_target(runs[i], target);
    best_goal = std::max(best_goal, row.goal);
  }
  if (fedgreen_index.has_value()) {
    const double fedgreen_goal = rows[*fedgreen_index].goal;
    if (fedgreen_goal < best_goal)
      throw SimError("fedgreen goal " + format_g9(fedgreen_goal) +
                     " is not the maximum (" + format_g9(best_goal) +
                     ") on seed " + std::to_string(scenario.seed));
    for (CompareRow& row : rows) row.best = false;
    rows[*fedgreen_index].best = true;
    const double fedgreen_energy = rows[*fedgreen_index].total_energy_j;
    if (fedgreen_energy > 0.0)
      for (CompareRow& row : rows) row.energy_ratio = row.total_energy_j / fedgreen_energy;
  } else {
    for (CompareRow& row : rows) row.best = row.goal == best_goal;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].best) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) rows[j].best = false;
        break;
      }
  }
  return rows;
}

inline void emit_summary_csv(const std::vector<CompareRow>& rows, const std::string& path) {
  std::ofstream out = detail::open_output(path);
  out << "seed,strategy,goal,contribution,total_energy_j,energy_to_target_j,energy_ratio,"
         "best\n";
  for (const CompareRow& row : rows) {
    out << row.seed << ',' << strategy_name(row.strategy) << ',' << format_g9(row.goal) << ','
        << format_g9(row.contribution) << ',' << format_g9(row.total_energy_j) << ',';
    if (row.energy_to_target_j.has_value()) out << format_g9(*row.energy_to_target_j);
    out << ',';
    if (row.energy_ratio.has_value()) out << format_g9(*row.energy_ratio);
    out << ',' << (row.best ? 1 : 0) << '\n';
  }
  detail::finish_output(out, path);
}

/// Toy-training curve CSV: one row per round.
inline void emit_toy_csv(const std::vector<double>& test_accuracy,
                         const std::vector<double>& train_loss, const std::string& path) {
  std::ofstream out = detail::open_output(path);
  out << "round,test_accuracy,train_loss\n";
  for (std::size_t r = 0; r < test_accuracy.size(); ++r)
    out << r << ',' << format_g9(test_accuracy[r]) << ',' << format_g9(train_loss[r]) << '\n';
  detail::finish_output(out, path);
}

/// Plain-text manifest: sorted key=value lines of the fully resolved
/// configuration plus run parameters.  No timestamps, no environment state.
inline void write_manifest(const std::map<std::string, std::string>& entries,
                           const std::string& path) {
  std::ofstream out = detail::open_output(path);
  for (const auto& [key, value] : entries) out << key << '=' << value << '\n';
  detail::finish_output(out, path);
}

}  // namespace fedgreen
