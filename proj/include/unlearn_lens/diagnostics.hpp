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

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "unlearn_lens/linalg.hpp"
#include "unlearn_lens/toy_lm.hpp"

namespace unlearn_lens {

/// Fixed windows on which activations are captured for every model state
/// being compared.
struct ProbeSet {
  Domain source = Domain::kForget;
  Batch batch;

  [[nodiscard]] std::size_t count() const noexcept { return batch.size(); }
};

/// Takes the final window of every sequence, then the window one position
/// earlier, and so on, until `count` windows are collected (or the corpus
/// runs out).
ProbeSet make_probe_set(const Corpus& corpus, std::size_t context_len, std::size_t count = 256);

/// One activation matrix per hidden layer, one row per probe window.
std::vector<Matrix> capture_activations(const TinyLM& model, const ProbeSet& probe);

// ---- PCA -------------------------------------------------------------------

struct LayerPca {
  std::vector<double> mean;  // column means of the raw activations
  std::vector<double> c1;
  std::vector<double> c2;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool degenerate_gap = false;
  // Mean activation projected onto (c1, c2).
  std::array<double, 2> p{0.0, 0.0};
};

LayerPca pca_layer(const Matrix& activations);
std::vector<LayerPca> pca_state(const std::vector<Matrix>& activations);
std::vector<LayerPca> pca_state(const TinyLM& model, const ProbeSet& probe);

struct Similarity {
  double raw = 1.0;
  double abs = 1.0;
  bool degenerate_gap = false;
};

std::vector<Similarity> pca_similarity(const std::vector<LayerPca>& orig, const std::vector<LayerPca>& upd);

/// Displacement of the mean activation, both states projected on the
/// original state's (c1, c2).
std::vector<std::array<double, 2>> pca_shift(const std::vector<LayerPca>& orig, const std::vector<LayerPca>& upd);

/// Layer average of the Euclidean norm of each shift.
double mean_pca_distance(const std::vector<std::array<double, 2>>& shifts);

// ---- CKA ---------------------------------------------------------------------

/// Linear CKA of two activation matrices with matching row counts.
double linear_cka(const Matrix& x, const Matrix& y);

// ---- Fisher ------------------------------------------------------------------

enum class FisherLabels { kEmpirical, kSampled };

struct FisherHistogram {
  static constexpr std::size_t kBins = 64;
  static constexpr double kLow = 1e-20;
  static constexpr double kHigh = 1e2;
  std::vector<std::size_t> counts = std::vector<std::size_t>(kBins, 0);

  static std::size_t bin_of(double value) noexcept;
  /// log10 of the geometric centre of bin b.
  static double bin_center_log10(std::size_t b) noexcept;
  /// Centre (log10) of the most populated bin; ties go to the lower bin.
  [[nodiscard]] double peak_log10() const noexcept;
};

struct FisherLayer {
  std::string name;  // "embedding", "hidden_<i>" or "output"
  std::size_t parameter_count = 0;
  double mean = 0.0;
  FisherHistogram histogram;
};

struct FisherSummary {
  std::vector<FisherLayer> layers;
  double mean = 0.0;  // average over every parameter
  std::size_t parameter_count = 0;
  ParamSet diagonal;
};

/// Diagonal empirical Fisher: mean over probe windows of the squared
/// gradient of log p(y | x). With kSampled, y is drawn from the model.
FisherSummary fisher_diagonal(const TinyLM& model, const Batch& probe, FisherLabels labels = FisherLabels::kEmpirical,
                              std::uint64_t seed = 0);

// ---- MIA -----------------------------------------------------------------------

struct MiaResult {
  double k_fraction = 0.2;
  std::vector<double> member_scores;
  std::vector<double> nonmember_scores;
  double auc = 0.5;
  std::size_t skipped = 0;  // sequences too short to score
};

/// Mean of the lowest ceil(k * T) values.
double min_k_score(std::span<const double> token_log_probs, double k);
/// Probability that a member outscores a non-member, ties counted half.
double auc_from_scores(std::span<const double> members, std::span<const double> nonmembers);
MiaResult min_k_mia(const TinyLM& model, const Corpus& members, const Corpus& nonmembers, double k = 0.2);

// ---- per-layer comparison ------------------------------------------------------

struct LayerDiagnostics {
  std::size_t layer = 0;
  double pca_similarity = 1.0;
  double pca_similarity_abs = 1.0;
  double shift_pc1 = 0.0;
  double shift_pc2 = 0.0;
  double cka = 1.0;
  double eigengap = 0.0;  // of the original state
  bool degenerate_gap = false;
  std::optional<double> fisher_mean;  // of the updated state, when weights are known
};

struct StateComparison {
  std::vector<LayerDiagnostics> layers;
  double mean_pca_distance = 0.0;
};

StateComparison compare_activations(const std::vector<Matrix>& orig, const std::vector<Matrix>& upd);

// ---- perturbation probe -----------------------------------------------------------

struct PerturbationConfig {
  std::vector<double> scales;          // total Frobenius norm of the injected perturbation
  std::vector<std::size_t> layers;     // hidden weight layers to perturb; empty means all
  std::uint64_t seed = 0;
  bool with_fisher = true;
};

struct PerturbationPoint {
  double scale = 0.0;
  double perturbation_norm = 0.0;  // realized ||E||_F over all perturbed layers
  double one_minus_similarity = 0.0;  // layer mean of 1 - |cos|
  double mean_pca_distance = 0.0;
  double one_minus_cka = 0.0;         // layer mean
  double gram_change = 0.0;           // layer mean of ||K~_upd - K~_orig||_F
  double delta_fisher_mean = 0.0;
};

struct PerturbationReport {
  std::vector<std::size_t> layers;
  std::vector<PerturbationPoint> points;
};

/// Adds E_i with i.i.d. normal entries to each chosen W_i, the budget split
/// so that sum_i ||E_i||_F^2 = scale^2, then re-measures every diagnostic
/// against the unperturbed model on `probe`.
PerturbationReport perturbation_probe(const TinyLM& model, const ProbeSet& probe, const PerturbationConfig& config);

/// The model with the perturbation of one schedule point applied.
TinyLM perturbed_model(const TinyLM& model, const std::vector<std::size_t>& layers, double scale, std::uint64_t seed);

}  // namespace unlearn_lens
