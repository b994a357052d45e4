// Copyright 2026 The unlearn-lens Authors.
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

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "unlearn_lens/protocols.hpp"

namespace unlearn_lens {

/// Shortest decimal that round-trips to the same double; "inf", "-inf" and
/// "nan" for non-finite values.
std::string format_real(double v);

/// Columns: phase,method,lr,N,corpus,metric,value,seed.
std::string metrics_csv(const ExperimentConfig& config, const std::vector<ForgettingRun>& runs);

/// Config echo, per-layer records, run-level values, verdicts and a
/// mean/std summary over seeds.
nlohmann::json diagnostics_json(const ExperimentConfig& config, const std::vector<ForgettingRun>& runs);

/// File name -> CSV text for similarity_vs_layer, shift_scatter,
/// cka_vs_layer and fisher_histogram.
std::map<std::string, std::string> plot_csvs(const std::vector<ForgettingRun>& runs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
MeanStd mean_std(const std::vector<double>& values);

// ---- run directory -------------------------------------------------------------

/// checkpoints/ for a single seed, checkpoints/seed_<s>/ otherwise.
std::filesystem::path checkpoint_dir(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                                     std::uint64_t seed);

/// Writes whichever model states the run holds (theta0, requests, theta_u,
/// theta_r_*) plus the small unlearn bookkeeping file.
void save_run_states(const std::filesystem::path& run_dir, const ExperimentConfig& config, const ForgettingRun& run);

/// Loads the stored states of one seed. Missing theta_u / theta_r files are
/// left empty; a missing theta0 is an error.
ForgettingRun load_run_states(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                              std::uint64_t seed);

void write_config(const std::filesystem::path& run_dir, const ExperimentConfig& config);
ExperimentConfig read_run_config(const std::filesystem::path& run_dir);

/// metrics.csv, diagnostics.json and plots/*.csv.
void write_reports(const std::filesystem::path& run_dir, const ExperimentConfig& config,
                   const std::vector<ForgettingRun>& runs);

}  // namespace unlearn_lens
