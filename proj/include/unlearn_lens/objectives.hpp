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
#include <memory>
#include <string>

#include "unlearn_lens/toy_lm.hpp"

namespace unlearn_lens {

enum class UnlearnMethod { kGA, kGAGD, kGAKL, kNPO, kNPOKL, kRLabel, kMaskedWagle };

std::string to_string(UnlearnMethod m);
/// Accepts "GA", "GA+GD", "GA+KL", "NPO", "NPO+KL", "RLabel", "GA+GD+MaskedWAGLE".
UnlearnMethod method_from_string(const std::string& s);

/// Which way the retain-set KL regularizer points.
enum class KlDirection {
  kReferenceToModel,  // KL(p_ref || p_model)
  kModelToReference,  // KL(p_model || p_ref)
};

enum class LikelihoodGranularity { kSequence, kToken };

std::string to_string(KlDirection d);
KlDirection kl_direction_from_string(const std::string& s);
std::string to_string(LikelihoodGranularity g);
LikelihoodGranularity granularity_from_string(const std::string& s);

struct UnlearnLossSpec {
  UnlearnMethod method = UnlearnMethod::kGA;
  double lambda = 1.0;         // retain-term weight
  double beta = 0.1;           // NPO inverse temperature
  double mask_fraction = 0.1;  // MaskedWAGLE only
  std::uint64_t seed = 0;      // RLabel label stream
  KlDirection kl_direction = KlDirection::kReferenceToModel;
  LikelihoodGranularity npo_granularity = LikelihoodGranularity::kSequence;

  void validate() const;
  [[nodiscard]] bool needs_retain() const noexcept;
  [[nodiscard]] bool needs_reference() const noexcept;
};

/// Frozen snapshot of the model taken before unlearning starts. Copies
/// share the same immutable parameters.
class ReferenceModel {
 public:
  explicit ReferenceModel(TinyLM snapshot) : model_(std::make_shared<const TinyLM>(std::move(snapshot))) {}
  [[nodiscard]] const TinyLM& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const TinyLM> model_;
};

struct ObjectiveValue {
  double loss = 0.0;
  ParamSet grads;
  // NPO: sequences whose log-ratio hit the clamp (zero gradient contribution).
  std::size_t clamped = 0;
};

/// Negated mean cross-entropy on the forget batch.
ObjectiveValue ga_loss(const TinyLM& model, const Batch& forget);
/// -CE(forget) + lambda * CE(retain).
ObjectiveValue ga_gd_loss(const TinyLM& model, const Batch& forget, const Batch& retain, double lambda);
/// Mean per-position KL between reference and model predictions on `retain`.
ObjectiveValue retain_kl_term(const TinyLM& model, const ReferenceModel& reference, const Batch& retain,
                              KlDirection direction = KlDirection::kReferenceToModel);
/// -CE(forget) + lambda * KL term.
ObjectiveValue ga_kl_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget,
                          const Batch& retain, double lambda,
                          KlDirection direction = KlDirection::kReferenceToModel);
/// (2/beta) * mean_s log(1 + exp(beta * r_s)), r_s the model/reference
/// log-likelihood ratio of sequence s (or window, at token granularity),
/// clamped to [-30/beta, 30/beta].
ObjectiveValue npo_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget, double beta,
                        LikelihoodGranularity granularity = LikelihoodGranularity::kSequence);
ObjectiveValue npo_kl_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget,
                           const Batch& retain, double beta, double lambda,
                           KlDirection direction = KlDirection::kReferenceToModel,
                           LikelihoodGranularity granularity = LikelihoodGranularity::kSequence);
/// Cross-entropy against labels drawn uniformly from the vocabulary, keyed by
/// (seed, window key) so the same window gets the same label for one seed.
ObjectiveValue rlabel_loss(const TinyLM& model, const Batch& forget, std::uint64_t seed);
Token random_label(std::uint64_t seed, std::uint64_t window_key, std::size_t vocab_size);

/// 0/1 mask selecting the ceil(rho * P) parameters with the largest
/// |dCE/dw * w| on the forget batch. Ties go to the lower flat index.
ParamSet saliency_mask(const TinyLM& model, const Batch& forget, double rho);

/// Dispatches on spec.method. `label_seed` feeds RLabel; the masked
/// variant returns the GA+GD objective (the mask is applied by the caller).
ObjectiveValue compute_objective(const UnlearnLossSpec& spec, const TinyLM& model, const ReferenceModel* reference,
                                 const Batch& forget, const Batch* retain, std::uint64_t label_seed);

}  // namespace unlearn_lens
