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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unlearn_lens/diagnostics.hpp"
#include "unlearn_lens/objectives.hpp"
#include "unlearn_lens/regimes.hpp"
#include "unlearn_lens/toy_lm.hpp"

namespace unlearn_lens {

enum class RelearnSource { kForget, kRetainSubset, kUnrelated };

std::string to_string(RelearnSource s);
RelearnSource relearn_source_from_string(const std::string& s);

struct TrainConfig {
  std::size_t steps = 600;
  std::size_t batch_size = 64;
  AdamWConfig adam{.peak_lr = 1e-2};
  double retain_floor = 0.8;
};

struct UnlearnConfig {
  UnlearnLossSpec loss;
  double peak_lr = 1e-3;
  std::size_t n_requests = 1;
  std::size_t steps_per_request = 20;
  std::size_t batch_size = 64;
  // Permute the order in which forget shards are processed.
  bool shuffle_requests = false;
};

struct RelearnConfig {
  std::vector<RelearnSource> sources = {RelearnSource::kForget};
  std::size_t budget = 0;  // sequences; 0 means |D_f|
  std::size_t steps = 0;   // 0 means 10% of the base-training steps
  double peak_lr = 1e-3;
  std::size_t batch_size = 64;
};

struct ExperimentConfig {
  std::string name = "custom";
  std::vector<std::uint64_t> seeds = {1};
  CorpusSpec corpus;
  ModelConfig model;  // vocab/context are taken from `corpus`; seed is derived per run
  TrainConfig train;
  UnlearnConfig unlearn;
  RelearnConfig relearn;
  RegimeThresholds thresholds;
  std::size_t probe_count = 256;
  double mia_k = 0.2;

  void validate() const;
  [[nodiscard]] std::size_t relearn_steps() const;
  [[nodiscard]] ModelConfig model_for(std::uint64_t seed) const;
};

/// Named presets: "reversible" (single mild GA request) and "irreversible"
/// (long aggressive continual GA stream).
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// ---- phases -------------------------------------------------------------------

struct PhaseLog {
  std::vector<double> losses;
  std::vector<double> learning_rates;
  std::size_t npo_clamped = 0;
  // (domain, sequence index) of every sequence the phase could draw from.
  std::vector<std::pair<Domain, std::uint32_t>> sources;
};

/// Trains a fresh model on forget ∪ retain. Throws "underfit base model"
/// when retain accuracy ends below the configured floor.
TinyLM train_base(const ExperimentConfig& config, const SyntheticCorpora& corpora, std::uint64_t seed,
                  PhaseLog* log = nullptr);

/// Splits D_f into N disjoint shards (seeded shuffle, then contiguous
/// near-equal chunks).
std::vector<std::vector<std::size_t>> partition(std::size_t forget_size, std::size_t n, std::uint64_t seed);

/// One unlearning request: fresh optimizer and schedule, reference fixed.
TinyLM unlearn_request(const TinyLM& model, const ReferenceModel& reference, const Corpus& shard, const Corpus& retain,
                       const UnlearnConfig& config, std::uint64_t seed, std::size_t request, PhaseLog* log = nullptr);

TinyLM unlearn_single(const TinyLM& theta0, const Corpus& forget, const Corpus& retain, const UnlearnConfig& config,
                      std::uint64_t seed, PhaseLog* log = nullptr);

/// Returns the model after every request (size N).
std::vector<TinyLM> unlearn_continual(const TinyLM& theta0, const Corpus& forget,
                                      const std::vector<std::vector<std::size_t>>& shards, const Corpus& retain,
                                      const UnlearnConfig& config, std::uint64_t seed,
                                      std::vector<PhaseLog>* logs = nullptr);

/// Picks `budget` sequences of the source corpus (seeded) and fine-tunes
/// with plain cross-entropy.
TinyLM relearn(const TinyLM& theta_u, RelearnSource source, const SyntheticCorpora& corpora,
               const RelearnConfig& config, std::size_t steps, std::uint64_t seed, PhaseLog* log = nullptr);

// ---- full pipeline ----------------------------------------------------------------

struct PhaseMetrics {
  std::string phase;
  std::string corpus;
  double accuracy = 0.0;
  double perplexity = 0.0;
  double mean_nll = 0.0;
  std::optional<double> mia_auc;
};

struct PhaseDiagnostics {
  std::string phase;
  Domain probe_source = Domain::kForget;
  StateComparison comparison;
  FisherSummary fisher;
};

struct ForgettingRun {
  std::uint64_t seed = 0;
  TinyLM theta0;
  std::vector<TinyLM> requests;  // state after each request; back() is theta_u
  TinyLM theta_u;
  std::map<std::string, TinyLM> theta_r;  // keyed by source name
  std::vector<std::vector<std::size_t>> partition;
  std::vector<PhaseMetrics> metrics;
  std::vector<PhaseDiagnostics> diagnostics;
  FisherSummary theta0_fisher;
  std::map<std::string, double> mean_pca_distance;  // by phase
  double mia_auc_theta0 = 0.0;
  std::size_t npo_clamped = 0;
  RegimeVerdict verdict;
  std::map<std::string, PhaseLog> logs;
};

/// Fills partition, requests, theta_u and npo_clamped from run.theta0.
void unlearn_phase(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run);
/// Fills theta_r for every configured source from run.theta_u.
void relearn_phase(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run);

/// Recomputes metrics, diagnostics and the verdict from the model states
/// stored in `run` (theta0, requests, theta_u, theta_r).
void finalize_run(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run);

/// "request_001", ...
std::string request_phase(std::size_t t);

/// Unlearn -> relearn -> diagnostics from an already trained theta0.
ForgettingRun run_from_base(const ExperimentConfig& config, const SyntheticCorpora& corpora, const TinyLM& theta0,
                            std::uint64_t seed);
ForgettingRun run_pipeline(const ExperimentConfig& config, std::uint64_t seed);

/// Accuracy/perplexity/MIA rows for one model state.
std::vector<PhaseMetrics> phase_metrics(const std::string& phase, const TinyLM& model, const SyntheticCorpora& corpora,
                                        double mia_k);

/// Verdict from the metrics of theta0, theta_u and theta_r_<source>.
RegimeVerdict verdict_from_metrics(const std::vector<PhaseMetrics>& metrics, const std::string& relearn_phase,
                                   const RegimeThresholds& thresholds);

}  // namespace unlearn_lens
