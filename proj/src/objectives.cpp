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

#include "unlearn_lens/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unlearn_lens/error.hpp"
#include "unlearn_lens/rng.hpp"

namespace unlearn_lens {

std::string to_string(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::kGA:
      return "GA";
    case UnlearnMethod::kGAGD:
      return "GA+GD";
    case UnlearnMethod::kGAKL:
      return "GA+KL";
    case UnlearnMethod::kNPO:
      return "NPO";
    case UnlearnMethod::kNPOKL:
      return "NPO+KL";
    case UnlearnMethod::kRLabel:
      return "RLabel";
    case UnlearnMethod::kMaskedWagle:
      return "GA+GD+MaskedWAGLE";
  }
  return "unknown";
}

UnlearnMethod method_from_string(const std::string& s) {
  for (auto m : {UnlearnMethod::kGA, UnlearnMethod::kGAGD, UnlearnMethod::kGAKL, UnlearnMethod::kNPO,
                 UnlearnMethod::kNPOKL, UnlearnMethod::kRLabel, UnlearnMethod::kMaskedWagle})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown unlearning method '" + s + "'");
}

std::string to_string(KlDirection d) {
  return d == KlDirection::kReferenceToModel ? "reference_to_model" : "model_to_reference";
}

KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "reference_to_model") return KlDirection::kReferenceToModel;
  if (s == "model_to_reference") return KlDirection::kModelToReference;
  throw ValidationError("unknown KL direction '" + s + "'");
}

std::string to_string(LikelihoodGranularity g) { return g == LikelihoodGranularity::kSequence ? "sequence" : "token"; }

LikelihoodGranularity granularity_from_string(const std::string& s) {
  if (s == "sequence") return LikelihoodGranularity::kSequence;
  if (s == "token") return LikelihoodGranularity::kToken;
  throw ValidationError("unknown likelihood granularity '" + s + "'");
}

void UnlearnLossSpec::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be finite and > 0");
  if (!(mask_fraction > 0.0 && mask_fraction <= 1.0)) throw ValidationError("mask_fraction must be in (0, 1]");
}

bool UnlearnLossSpec::needs_retain() const noexcept {
  return method == UnlearnMethod::kGAGD || method == UnlearnMethod::kGAKL || method == UnlearnMethod::kNPOKL ||
         method == UnlearnMethod::kMaskedWagle;
}

bool UnlearnLossSpec::needs_reference() const noexcept {
  return method == UnlearnMethod::kGAKL || method == UnlearnMethod::kNPO || method == UnlearnMethod::kNPOKL;
}

namespace {

ObjectiveValue combine(ObjectiveValue forget_term, const ObjectiveValue& retain_term, double lambda) {
  forget_term.loss = forget_term.loss + lambda * retain_term.loss;
  forget_term.grads.add_scaled(retain_term.grads, lambda);
  forget_term.clamped += retain_term.clamped;
  return forget_term;
}

ObjectiveValue from(LossGrads lg) { return {lg.loss, std::move(lg.grads), 0}; }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_shapes(const TinyLM& model, const ReferenceModel& reference) {
  if (!(model.config().vocab_size == reference.model().config().vocab_size &&
        model.config().context_len == reference.model().config().context_len))
    throw ValidationError("reference model is not shape-compatible with the model");
}

}  // namespace

ObjectiveValue ga_loss(const TinyLM& model, const Batch& forget) {
  LossGrads ce = loss_and_grads(model, forget);
  ce.loss = -ce.loss;
  ce.grads.scale(-1.0);
  return from(std::move(ce));
}

ObjectiveValue ga_gd_loss(const TinyLM& model, const Batch& forget, const Batch& retain, double lambda) {
  return combine(ga_loss(model, forget), from(loss_and_grads(model, retain)), lambda);
}

ObjectiveValue retain_kl_term(const TinyLM& model, const ReferenceModel& reference, const Batch& retain,
                              KlDirection direction) {
  check_shapes(model, reference);
  const ForwardTrace ref = forward(reference.model(), retain, false);
  return from(loss_with_head(model, retain, [&](const Matrix& lp, Matrix& d) {
    const std::size_t n = lp.rows();
    const double inv = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto m = lp.row(r);
      const auto q = ref.log_probs.row(r);
      auto dr = d.row(r);
      double kl = 0.0;
      if (direction == KlDirection::kReferenceToModel) {
        for (std::size_t v = 0; v < m.size(); ++v) {
          const double pq = std::exp(q[v]);
          kl += pq * (q[v] - m[v]);
          dr[v] = (std::exp(m[v]) - pq) * inv;
        }
      } else {
        for (std::size_t v = 0; v < m.size(); ++v) kl += std::exp(m[v]) * (m[v] - q[v]);
        for (std::size_t v = 0; v < m.size(); ++v) dr[v] = std::exp(m[v]) * (m[v] - q[v] - kl) * inv;
      }
      // Rounding can leave a tiny negative value when the two match.
      total += std::max(0.0, kl);
    }
    return total * inv;
  }));
}

ObjectiveValue ga_kl_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget,
                          const Batch& retain, double lambda, KlDirection direction) {
  return combine(ga_loss(model, forget), retain_kl_term(model, reference, retain, direction), lambda);
}

ObjectiveValue npo_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget, double beta,
                        LikelihoodGranularity granularity) {
  if (!(beta > 0.0)) throw ValidationError("beta must be > 0");
  check_shapes(model, reference);
  const ForwardTrace ref = forward(reference.model(), forget, false);
  const std::size_t n = forget.size();
  const bool per_token = granularity == LikelihoodGranularity::kToken;
  const std::size_t groups = per_token ? n : forget.group_count;
  auto group_of = [&](std::size_t r) -> std::size_t { return per_token ? r : forget.groups[r]; };

  std::size_t clamped = 0;
  LossGrads lg = loss_with_head(model, forget, [&](const Matrix& lp, Matrix& d) {
    std::vector<double> ratio(groups, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const Token y = forget.targets[r];
      ratio[group_of(r)] += lp(r, y) - ref.log_probs(r, y);
    }
    const double bound = 30.0 / beta;
    const double inv = 1.0 / static_cast<double>(groups);
    std::vector<double> weight(groups, 0.0);
    double total = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
      double x = ratio[g];
      bool active = true;
      if (x > bound || x < -bound) {
        x = std::clamp(x, -bound, bound);
        active = false;
        ++clamped;
      }
      total += softplus(beta * x);
      weight[g] = active ? 2.0 * inv * sigmoid(beta * x) : 0.0;
    }
    // d r_s / d logits_w = onehot(y_w) - p_w for each window w of group s.
    for (std::size_t r = 0; r < n; ++r) {
      const double w = weight[group_of(r)];
      auto dr = d.row(r);
      const auto row = lp.row(r);
      for (std::size_t v = 0; v < row.size(); ++v) dr[v] = -w * std::exp(row[v]);
      dr[forget.targets[r]] += w;
    }
    return (2.0 / beta) * total * inv;
  });
  ObjectiveValue out = from(std::move(lg));
  out.clamped = clamped;
  return out;
}

ObjectiveValue npo_kl_loss(const TinyLM& model, const ReferenceModel& reference, const Batch& forget,
                           const Batch& retain, double beta, double lambda, KlDirection direction,
                           LikelihoodGranularity granularity) {
  return combine(npo_loss(model, reference, forget, beta, granularity),
                 retain_kl_term(model, reference, retain, direction), lambda);
}

Token random_label(std::uint64_t seed, std::uint64_t window_key, std::size_t vocab_size) {
  Rng rng(derive_seed(seed, window_key));
  return static_cast<Token>(rng.below(vocab_size));
}

ObjectiveValue rlabel_loss(const TinyLM& model, const Batch& forget, std::uint64_t seed) {
  Batch relabeled = forget;
  const std::size_t vocab = model.config().vocab_size;
  for (std::size_t r = 0; r < relabeled.size(); ++r) {
    const std::uint64_t key = r < forget.keys.size() ? forget.keys[r] : r;
    relabeled.targets[r] = random_label(seed, key, vocab);
  }
  return from(loss_and_grads(model, relabeled));
}

ParamSet saliency_mask(const TinyLM& model, const Batch& forget, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("mask fraction must be in (0, 1]");
  const LossGrads ce = loss_and_grads(model, forget);
  const std::size_t P = model.parameter_count();
  std::vector<double> score(P);
  {
    std::size_t i = 0;
    for (std::size_t t = 0; t < ce.grads.tensors.size(); ++t) {
      const auto g = ce.grads.tensors[t].values();
      const auto w = model.params().tensors[t].values();
      for (std::size_t j = 0; j < g.size(); ++j) score[i++] = std::abs(g[j] * w[j]);
    }
  }
  const auto keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(P) - 1e-9));
  std::vector<std::size_t> order(P);
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); };
  if (keep < P) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), before);

  ParamSet mask = model.params().zeros_like();
  for (std::size_t k = 0; k < std::min(keep, P); ++k) mask.flat(order[k]) = 1.0;
  return mask;
}

ObjectiveValue compute_objective(const UnlearnLossSpec& spec, const TinyLM& model, const ReferenceModel* reference,
                                 const Batch& forget, const Batch* retain, std::uint64_t label_seed) {
  if (spec.needs_retain() && retain == nullptr) throw ValidationError(to_string(spec.method) + " needs a retain batch");
  if (spec.needs_reference() && reference == nullptr)
    throw ValidationError(to_string(spec.method) + " needs a reference model");
  switch (spec.method) {
    case UnlearnMethod::kGA:
      return ga_loss(model, forget);
    case UnlearnMethod::kGAGD:
    case UnlearnMethod::kMaskedWagle:
      return ga_gd_loss(model, forget, *retain, spec.lambda);
    case UnlearnMethod::kGAKL:
      return ga_kl_loss(model, *reference, forget, *retain, spec.lambda, spec.kl_direction);
    case UnlearnMethod::kNPO:
      return npo_loss(model, *reference, forget, spec.beta, spec.npo_granularity);
    case UnlearnMethod::kNPOKL:
      return npo_kl_loss(model, *reference, forget, *retain, spec.beta, spec.lambda, spec.kl_direction,
                         spec.npo_granularity);
    case UnlearnMethod::kRLabel:
      return rlabel_loss(model, forget, label_seed);
  }
  throw ValidationError("unhandled unlearning method");
}

}  // namespace unlearn_lens
