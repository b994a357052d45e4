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

#include "unlearn_lens/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "unlearn_lens/error.hpp"
#include "unlearn_lens/rng.hpp"

namespace unlearn_lens {

namespace {
// Stream ids for derive_seed; one per independent random decision.
constexpr std::uint64_t kModelStream = 100;
constexpr std::uint64_t kBaseSampler = 200;
constexpr std::uint64_t kForgetSampler = 300;
constexpr std::uint64_t kRetainSampler = 400;
constexpr std::uint64_t kLabelStream = 500;
constexpr std::uint64_t kPartitionStream = 600;
constexpr std::uint64_t kRelearnPick = 700;
constexpr std::uint64_t kRelearnSampler = 800;
constexpr std::uint64_t kOrderStream = 900;
constexpr std::uint64_t kFisherStream = 1000;
}  // namespace

std::string to_string(RelearnSource s) {
  switch (s) {
    case RelearnSource::kForget:
      return "forget";
    case RelearnSource::kRetainSubset:
      return "retain_subset";
    case RelearnSource::kUnrelated:
      return "unrelated";
  }
  return "unknown";
}

RelearnSource relearn_source_from_string(const std::string& s) {
  if (s == "forget") return RelearnSource::kForget;
  if (s == "retain_subset") return RelearnSource::kRetainSubset;
  if (s == "unrelated") return RelearnSource::kUnrelated;
  throw ValidationError("unknown relearn source '" + s + "'");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ValidationError("seeds must not be empty");
  if (corpus.vocab_size < 8) throw ValidationError("corpus.vocab_size must be >= 8");
  if (corpus.forget_count == 0 || corpus.retain_count == 0 || corpus.unrelated_count == 0 ||
      corpus.holdout_count == 0)
    throw ValidationError("corpus counts must be >= 1");
  if (corpus.sequence_length < corpus.context_len + 1)
    throw ValidationError("corpus.sequence_length must be >= context_len + 1");
  if (!(corpus.unrelated_vocab_fraction > 0.0 && corpus.unrelated_vocab_fraction < 1.0))
    throw ValidationError("corpus.unrelated_vocab_fraction must be in (0, 1)");
  if (model.embed_dim == 0 || model.hidden.empty())
    throw ValidationError("model needs embed_dim > 0 and at least one hidden layer");
  for (std::size_t h : model.hidden)
    if (h < 2) throw ValidationError("hidden widths must be >= 2");
  if (train.steps == 0 || train.batch_size == 0) throw ValidationError("train.steps and train.batch_size must be > 0");
  if (!(train.adam.peak_lr > 0.0)) throw ValidationError("train.peak_lr must be > 0");
  unlearn.loss.validate();
  if (!(unlearn.peak_lr > 0.0) || !std::isfinite(unlearn.peak_lr)) throw ValidationError("unlearn.peak_lr must be > 0");
  if (unlearn.n_requests == 0) throw ValidationError("unlearn.n_requests must be >= 1");
  if (unlearn.n_requests > corpus.forget_count)
    throw ValidationError("unlearn.n_requests exceeds the forget set size");
  if (unlearn.batch_size == 0) throw ValidationError("unlearn.batch_size must be > 0");
  if (relearn.sources.empty()) throw ValidationError("relearn.sources must not be empty");
  if (!(relearn.peak_lr > 0.0)) throw ValidationError("relearn.peak_lr must be > 0");
  if (relearn.budget > corpus.forget_count) throw ValidationError("relearn.budget exceeds |D_f|");
  if (relearn.batch_size == 0) throw ValidationError("relearn.batch_size must be > 0");
  thresholds.validate();
  if (probe_count < 3) throw ValidationError("probe_count must be >= 3");
  if (!(mia_k > 0.0 && mia_k <= 1.0)) throw ValidationError("mia_k must be in (0, 1]");
}

std::size_t ExperimentConfig::relearn_steps() const {
  return relearn.steps != 0 ? relearn.steps : std::max<std::size_t>(1, train.steps / 10);
}

ModelConfig ExperimentConfig::model_for(std::uint64_t seed) const {
  ModelConfig m = model;
  m.vocab_size = corpus.vocab_size;
  m.context_len = corpus.context_len;
  m.seed = derive_seed(seed, kModelStream);
  return m;
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  if (name == "reversible") {
    c.unlearn.loss.method = UnlearnMethod::kGA;
    c.unlearn.peak_lr = 3e-3;
    c.unlearn.n_requests = 1;
    c.unlearn.steps_per_request = 8;
  } else if (name == "irreversible") {
    c.unlearn.loss.method = UnlearnMethod::kGA;
    c.unlearn.peak_lr = 3e-2;
    c.unlearn.n_requests = 20;
    c.unlearn.steps_per_request = 8;
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> preset_names() { return {"reversible", "irreversible"}; }

// ---- phases -------------------------------------------------------------------

namespace {

void record_sources(PhaseLog* log, const Corpus& corpus, std::span<const std::size_t> indices) {
  if (log == nullptr) return;
  for (std::size_t i : indices) log->sources.emplace_back(corpus.domain, static_cast<std::uint32_t>(i));
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Plain cross-entropy fine-tuning on a fixed window pool.
void fit_ce(TinyLM& model, const Corpus& corpus, const AdamWConfig& adam, std::size_t steps, std::size_t batch_size,
            std::uint64_t sampler_seed, PhaseLog* log) {
  if (steps == 0) return;
  const std::size_t C = model.config().context_len;
  WindowSampler sampler(enumerate_windows(corpus, C), sampler_seed);
  OptimizerState opt = OptimizerState::for_model(model, adam);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto windows = sampler.next(batch_size);
    const Batch batch = make_batch(corpus, windows, C);
    const LossGrads lg = loss_and_grads(model, batch);
    StepInfo info;
    try {
      info = adamw_step(model, lg.grads, opt, steps);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (training step " + std::to_string(s) + ")");
    }
    if (log != nullptr) {
      log->losses.push_back(lg.loss);
      log->learning_rates.push_back(info.lr);
    }
  }
}

Corpus concat(const Corpus& a, const Corpus& b) {
  Corpus out = a;
  out.sequences.insert(out.sequences.end(), b.sequences.begin(), b.sequences.end());
  out.template_ids.insert(out.template_ids.end(), b.template_ids.begin(), b.template_ids.end());
  return out;
}

}  // namespace

TinyLM train_base(const ExperimentConfig& config, const SyntheticCorpora& corpora, std::uint64_t seed,
                  PhaseLog* log) {
  TinyLM model = TinyLM::init(config.model_for(seed));
  const Corpus all = concat(corpora.forget, corpora.retain);
  if (log != nullptr) {
    record_sources(log, corpora.forget, all_indices(corpora.forget.size()));
    record_sources(log, corpora.retain, all_indices(corpora.retain.size()));
  }
  fit_ce(model, all, config.train.adam, config.train.steps, config.train.batch_size, derive_seed(seed, kBaseSampler),
         log);
  const double acc = evaluate(model, corpora.retain).accuracy;
  if (acc < config.train.retain_floor)
    throw NumericalError("underfit base model: retain accuracy " + std::to_string(acc) + " below floor " +
                         std::to_string(config.train.retain_floor));
  return model;
}

std::vector<std::vector<std::size_t>> partition(std::size_t forget_size, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > forget_size) throw ValidationError("request count must be in [1, |D_f|]");
  std::vector<std::size_t> order = all_indices(forget_size);
  Rng rng(derive_seed(seed, kPartitionStream));
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> shards(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t begin = forget_size * k / n;
    const std::size_t end = forget_size * (k + 1) / n;
    shards[k].assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(shards[k].begin(), shards[k].end());
  }
  return shards;
}

TinyLM unlearn_request(const TinyLM& model, const ReferenceModel& reference, const Corpus& shard, const Corpus& retain,
                       const UnlearnConfig& config, std::uint64_t seed, std::size_t request, PhaseLog* log) {
  config.loss.validate();
  TinyLM out = model;
  const std::size_t steps = config.steps_per_request;
  if (steps == 0) return out;
  const std::size_t C = model.config().context_len;
  const auto forget_windows = enumerate_windows(shard, C);
  WindowSampler forget_sampler(forget_windows, derive_seed(seed, kForgetSampler + request));
  std::optional<WindowSampler> retain_sampler;
  if (config.loss.needs_retain())
    retain_sampler.emplace(enumerate_windows(retain, C), derive_seed(seed, kRetainSampler + request));

  std::optional<ParamSet> mask;
  if (config.loss.method == UnlearnMethod::kMaskedWagle)
    mask = saliency_mask(out, make_batch(shard, forget_windows, C), config.loss.mask_fraction);

  AdamWConfig adam;
  adam.peak_lr = config.peak_lr;
  OptimizerState opt = OptimizerState::for_model(out, adam);
  const std::uint64_t label_base = derive_seed(seed, kLabelStream + request);
  for (std::size_t s = 0; s < steps; ++s) {
    const Batch fb = make_batch(shard, forget_sampler.next(config.batch_size), C);
    std::optional<Batch> rb;
    if (retain_sampler) rb = make_batch(retain, retain_sampler->next(config.batch_size), C);
    // Random labels are redrawn once per pass over the shard.
    const std::uint64_t label_seed = derive_seed(label_base, forget_sampler.epoch());
    try {
      const ObjectiveValue v =
          compute_objective(config.loss, out, &reference, fb, rb ? &*rb : nullptr, label_seed);
      const StepInfo info = adamw_step(out, v.grads, opt, steps, mask ? &*mask : nullptr);
      if (log != nullptr) {
        log->losses.push_back(v.loss);
        log->learning_rates.push_back(info.lr);
        log->npo_clamped += v.clamped;
      }
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (unlearning request " + std::to_string(request) + ", step " +
                           std::to_string(s) + ")");
    }
  }
  return out;
}

TinyLM unlearn_single(const TinyLM& theta0, const Corpus& forget, const Corpus& retain, const UnlearnConfig& config,
                      std::uint64_t seed, PhaseLog* log) {
  record_sources(log, forget, all_indices(forget.size()));
  return unlearn_request(theta0, ReferenceModel(theta0), forget, retain, config, seed, 0, log);
}

std::vector<TinyLM> unlearn_continual(const TinyLM& theta0, const Corpus& forget,
                                      const std::vector<std::vector<std::size_t>>& shards, const Corpus& retain,
                                      const UnlearnConfig& config, std::uint64_t seed, std::vector<PhaseLog>* logs) {
  // The shards must cover D_f exactly once.
  std::vector<int> seen(forget.size(), 0);
  for (const auto& shard : shards)
    for (std::size_t i : shard) {
      if (i >= forget.size() || seen[i]++) throw ValidationError("request partition is not a disjoint cover of D_f");
    }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw ValidationError("request partition is not a disjoint cover of D_f");

  std::vector<std::size_t> order = all_indices(shards.size());
  if (config.shuffle_requests) {
    Rng rng(derive_seed(seed, kOrderStream));
    rng.shuffle(std::span<std::size_t>(order));
  }
  const ReferenceModel reference(theta0);
  std::vector<TinyLM> states;
  TinyLM current = theta0;
  if (logs != nullptr) logs->assign(shards.size(), PhaseLog{});
  for (std::size_t t = 0; t < order.size(); ++t) {
    const auto& idx = shards[order[t]];
    PhaseLog* log = logs != nullptr ? &(*logs)[t] : nullptr;
    record_sources(log, forget, idx);
    current = unlearn_request(current, reference, forget.subset(idx), retain, config, seed, t, log);
    states.push_back(current);
  }
  return states;
}

TinyLM relearn(const TinyLM& theta_u, RelearnSource source, const SyntheticCorpora& corpora,
               const RelearnConfig& config, std::size_t steps, std::uint64_t seed, PhaseLog* log) {
  const std::size_t budget = config.budget != 0 ? config.budget : corpora.forget.size();
  if (budget > corpora.forget.size()) throw ValidationError("relearn budget exceeds |D_f|");
  TinyLM out = theta_u;
  if (steps == 0 || budget == 0) return out;
  const Corpus* pool = nullptr;
  switch (source) {
    case RelearnSource::kForget:
      pool = &corpora.forget;
      break;
    case RelearnSource::kRetainSubset:
      pool = &corpora.retain;
      break;
    case RelearnSource::kUnrelated:
      pool = &corpora.unrelated;
      break;
  }
  std::vector<std::size_t> pick = all_indices(pool->size());
  Rng rng(derive_seed(seed, kRelearnPick + static_cast<std::uint64_t>(source)));
  rng.shuffle(std::span<std::size_t>(pick));
  pick.resize(std::min(budget, pick.size()));
  std::sort(pick.begin(), pick.end());
  record_sources(log, *pool, pick);

  AdamWConfig adam;
  adam.peak_lr = config.peak_lr;
  fit_ce(out, pool->subset(pick), adam, steps, config.batch_size,
         derive_seed(seed, kRelearnSampler + static_cast<std::uint64_t>(source)), log);
  return out;
}

// ---- full pipeline ----------------------------------------------------------------

std::vector<PhaseMetrics> phase_metrics(const std::string& phase, const TinyLM& model, const SyntheticCorpora& corpora,
                                        double mia_k) {
  std::vector<PhaseMetrics> rows;
  for (const Corpus* c : {&corpora.forget, &corpora.retain, &corpora.unrelated}) {
    const EvalResult r = evaluate(model, *c);
    PhaseMetrics m;
    m.phase = phase;
    m.corpus = to_string(c->domain);
    m.accuracy = r.accuracy;
    m.perplexity = r.perplexity;
    m.mean_nll = r.mean_nll;
    // Membership only makes sense for trained-on corpora.
    if (c->domain != Domain::kUnrelated) m.mia_auc = min_k_mia(model, *c, corpora.holdout, mia_k).auc;
    rows.push_back(std::move(m));
  }
  return rows;
}

RegimeVerdict verdict_from_metrics(const std::vector<PhaseMetrics>& metrics, const std::string& relearn_phase,
                                   const RegimeThresholds& thresholds) {
  std::map<std::string, double> forget;
  std::map<std::string, double> retain;
  for (const auto& m : metrics) {
    const std::string phase = m.phase == relearn_phase ? "theta_r" : m.phase;
    if (m.corpus == "forget") forget[phase] = 100.0 * m.accuracy;
    if (m.corpus == "retain") retain[phase] = 100.0 * m.accuracy;
  }
  return classify(compute_deltas(forget), compute_deltas(retain), thresholds);
}

namespace {

PhaseDiagnostics diagnose_phase(const std::string& phase, const ProbeSet& probe, const std::vector<Matrix>& base_acts,
                                const TinyLM& model, const FisherSummary& fisher) {
  PhaseDiagnostics d;
  d.phase = phase;
  d.probe_source = probe.source;
  d.comparison = compare_activations(base_acts, capture_activations(model, probe));
  // Fisher layers are embedding, hidden_0.., output; hidden layer i is entry i + 1.
  for (auto& l : d.comparison.layers) l.fisher_mean = fisher.layers[l.layer + 1].mean;
  d.fisher = fisher;
  return d;
}

}  // namespace

std::string request_phase(std::size_t t) {
  char name[32];
  std::snprintf(name, sizeof name, "request_%03zu", t + 1);
  return name;
}

void finalize_run(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run) {
  run.metrics.clear();
  run.diagnostics.clear();
  run.mean_pca_distance.clear();
  auto add_metrics = [&](const std::string& phase, const TinyLM& m) {
    auto rows = phase_metrics(phase, m, corpora, config.mia_k);
    run.metrics.insert(run.metrics.end(), rows.begin(), rows.end());
  };
  add_metrics("theta0", run.theta0);
  for (const auto& m : run.metrics)
    if (m.corpus == "forget") run.mia_auc_theta0 = *m.mia_auc;
  if (run.requests.size() > 1)
    for (std::size_t t = 0; t < run.requests.size(); ++t) add_metrics(request_phase(t), run.requests[t]);
  const std::size_t C = config.corpus.context_len;
  const ProbeSet forget_probe = make_probe_set(corpora.forget, C, config.probe_count);
  const std::uint64_t fseed = derive_seed(run.seed, kFisherStream);
  run.theta0_fisher = fisher_diagonal(run.theta0, forget_probe.batch, FisherLabels::kEmpirical, fseed);
  if (run.requests.empty()) return;  // not unlearned yet

  add_metrics("theta_u", run.theta_u);
  for (const auto& [src, m] : run.theta_r) add_metrics("theta_r_" + src, m);

  // Representation diagnostics against theta0.
  const ProbeSet retain_probe = make_probe_set(corpora.retain, C, config.probe_count);

  std::vector<std::pair<std::string, const TinyLM*>> phases = {{"theta_u", &run.theta_u}};
  for (const auto& [src, m] : run.theta_r) phases.emplace_back("theta_r_" + src, &m);
  std::vector<FisherSummary> fishers;
  for (const auto& [phase, model] : phases)
    fishers.push_back(fisher_diagonal(*model, forget_probe.batch, FisherLabels::kEmpirical, fseed));
  for (const ProbeSet* probe : {&forget_probe, &retain_probe}) {
    const auto base = capture_activations(run.theta0, *probe);
    for (std::size_t i = 0; i < phases.size(); ++i) {
      const auto& [phase, model] = phases[i];
      run.diagnostics.push_back(diagnose_phase(phase, *probe, base, *model, fishers[i]));
      if (probe == &forget_probe) run.mean_pca_distance[phase] = run.diagnostics.back().comparison.mean_pca_distance;
    }
  }

  if (!run.theta_r.empty()) {
    const std::string src = run.theta_r.contains("forget") ? "forget" : run.theta_r.begin()->first;
    run.verdict = verdict_from_metrics(run.metrics, "theta_r_" + src, config.thresholds);
  }
}

void unlearn_phase(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run) {
  run.partition = partition(corpora.forget.size(), config.unlearn.n_requests, run.seed);
  std::vector<PhaseLog> logs;
  run.requests =
      unlearn_continual(run.theta0, corpora.forget, run.partition, corpora.retain, config.unlearn, run.seed, &logs);
  run.theta_u = run.requests.back();
  PhaseLog merged;
  for (auto& l : logs) {
    merged.losses.insert(merged.losses.end(), l.losses.begin(), l.losses.end());
    merged.learning_rates.insert(merged.learning_rates.end(), l.learning_rates.begin(), l.learning_rates.end());
    merged.sources.insert(merged.sources.end(), l.sources.begin(), l.sources.end());
    merged.npo_clamped += l.npo_clamped;
  }
  run.npo_clamped = merged.npo_clamped;
  run.logs["theta_u"] = std::move(merged);
}

void relearn_phase(const ExperimentConfig& config, const SyntheticCorpora& corpora, ForgettingRun& run) {
  const std::size_t steps = config.relearn_steps();
  run.theta_r.clear();
  for (RelearnSource src : config.relearn.sources) {
    PhaseLog log;
    TinyLM r = relearn(run.theta_u, src, corpora, config.relearn, steps, run.seed, &log);
    run.logs["theta_r_" + to_string(src)] = std::move(log);
    run.theta_r.emplace(to_string(src), std::move(r));
  }
}

ForgettingRun run_from_base(const ExperimentConfig& config, const SyntheticCorpora& corpora, const TinyLM& theta0,
                            std::uint64_t seed) {
  config.validate();
  ForgettingRun run;
  run.seed = seed;
  run.theta0 = theta0;
  unlearn_phase(config, corpora, run);
  relearn_phase(config, corpora, run);
  finalize_run(config, corpora, run);
  return run;
}

ForgettingRun run_pipeline(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const SyntheticCorpora corpora = make_synthetic_corpora(seed, config.corpus);
  PhaseLog log;
  const TinyLM theta0 = train_base(config, corpora, seed, &log);
  ForgettingRun run = run_from_base(config, corpora, theta0, seed);
  run.logs["theta0"] = std::move(log);
  return run;
}

}  // namespace unlearn_lens
