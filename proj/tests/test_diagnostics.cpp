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

#include "doctest.h"

#include <cmath>

#include "checks.hpp"
#include "unlearn_lens/diagnostics.hpp"

using namespace unlearn_lens;

namespace {

struct Trained {
  TinyLM model;
  SyntheticCorpora corpora;
  ProbeSet probe;
};

// A small model fitted on forget + retain so diagnostics see real structure.
const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    CorpusSpec spec;
    spec.forget_count = 12;
    spec.retain_count = 32;
    spec.holdout_count = 32;
    out.corpora = make_synthetic_corpora(2, spec);
    ModelConfig mc;
    mc.seed = 2;
    out.model = TinyLM::init(mc);
    Batch b = corpus_batch(out.corpora.forget, spec.context_len);
    b.append(corpus_batch(out.corpora.retain, spec.context_len));
    AdamWConfig ac;
    ac.peak_lr = 1e-2;
    auto opt = OptimizerState::for_model(out.model, ac);
    for (int i = 0; i < 150; ++i) adamw_step(out.model, loss_and_grads(out.model, b).grads, opt, 150);
    out.probe = make_probe_set(out.corpora.forget, spec.context_len, 128);
    return out;
  }();
  return t;
}

}  // namespace

TEST_CASE("probe set takes final windows first") {
  const auto& t = trained();
  CHECK(t.probe.count() == 128);
  const auto& seq = t.corpora.forget.sequences[0];
  CHECK(t.probe.batch.targets[0] == seq.back());
  CHECK(t.probe.source == Domain::kForget);
}

TEST_CASE("a state compared with itself is at baseline") {
  const auto& t = trained();
  const auto acts = capture_activations(t.model, t.probe);
  const StateComparison c = compare_activations(acts, acts);
  CHECK(c.mean_pca_distance == 0.0);
  for (const auto& l : c.layers) {
    CHECK(l.pca_similarity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.cka == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.shift_pc1 == 0.0);
    CHECK(l.shift_pc2 == 0.0);
    CHECK(l.eigengap > 0.0);
  }
}

TEST_CASE("PCA finds the dominant direction and the mean projection") {
  // Points spread along (1, 1) / sqrt 2 around a mean of (3, 3).
  Matrix x(40, 2);
  Rng rng(1);
  for (std::size_t r = 0; r < 40; ++r) {
    const double a = 5.0 * rng.normal(), b = 0.1 * rng.normal();
    x(r, 0) = 3.0 + (a + b) / std::sqrt(2.0);
    x(r, 1) = 3.0 + (a - b) / std::sqrt(2.0);
  }
  const LayerPca p = pca_layer(x);
  CHECK(std::abs(p.c1[0]) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-2));
  CHECK(p.lambda1 > 100.0 * p.lambda2);
  CHECK(p.p[0] == doctest::Approx(p.mean[0] * p.c1[0] + p.mean[1] * p.c1[1]));
  CHECK_THROWS_AS(pca_layer(Matrix(2, 2)), ValidationError);
}

TEST_CASE("collapsed layers are reported, not divided by zero") {
  Matrix x(10, 3);
  for (std::size_t r = 0; r < 10; ++r) x(r, 1) = 2.0;
  CHECK_THROWS_AS(pca_layer(x), NumericalError);
}

TEST_CASE("PCA shift of a translated state is the translation in the original basis") {
  const auto& t = trained();
  auto acts = capture_activations(t.model, t.probe);
  const auto orig = pca_state(acts);
  for (auto& m : acts)
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, 0) += 0.5;
  const auto shift = pca_shift(orig, pca_state(acts));
  for (std::size_t l = 0; l < shift.size(); ++l) {
    CHECK(shift[l][0] == doctest::Approx(0.5 * orig[l].c1[0]).epsilon(1e-9));
    CHECK(shift[l][1] == doctest::Approx(0.5 * orig[l].c2[0]).epsilon(1e-9));
  }
}

TEST_CASE("linear CKA matches the trace oracle, is symmetric and invariant") {
  CHECK(checks::cka_oracle_check(50, 3) < 1e-10);
  CHECK(checks::cka_invariance_check(20, 4) <= 1e-9);
  const Matrix x = oracle::random_matrix(25, 6, 1);
  const Matrix y = oracle::random_matrix(25, 4, 2);
  CHECK(std::abs(linear_cka(x, y) - linear_cka(y, x)) < 1e-12);
  CHECK_THROWS_AS(linear_cka(x, oracle::random_matrix(24, 4, 3)), ValidationError);
}

TEST_CASE("min-k score averages the lowest ceil(k T) log-probs") {
  const std::vector<double> lp = {-0.1, -3.0, -0.5, -2.0, -0.2};
  CHECK(min_k_score(lp, 0.2) == -3.0);
  CHECK(min_k_score(lp, 0.4) == -2.5);
  CHECK(min_k_score(lp, 1.0) == doctest::Approx(-5.8 / 5));
  CHECK_THROWS_AS(min_k_score(lp, 0.0), ValidationError);
}

TEST_CASE("AUC matches the pair-loop oracle and is label-swap antisymmetric") {
  CHECK(checks::auc_oracle_check(50, 5) < 1e-12);
  const std::vector<double> a = {1, 2, 2, 5}, b = {0, 2, 3};
  CHECK(std::abs(auc_from_scores(a, b) + auc_from_scores(b, a) - 1.0) <= 1e-12);
  CHECK(auc_from_scores(a, a) == 0.5);
}

TEST_CASE("MIA: identical member and non-member sets give 0.5; memorized members score high") {
  const auto& t = trained();
  CHECK(min_k_mia(t.model, t.corpora.forget, t.corpora.forget).auc == 0.5);
  CHECK(min_k_mia(t.model, t.corpora.retain, t.corpora.holdout).auc > 0.9);
}

TEST_CASE("Fisher diagonal matches the per-parameter loop oracle") {
  for (std::uint64_t s = 1; s <= 3; ++s) CHECK(checks::fisher_oracle_check(s) < 1e-12);
}

TEST_CASE("Fisher is non-negative, grouped by layer and thread-count independent") {
  const auto& t = trained();
  const FisherSummary f = fisher_diagonal(t.model, t.probe.batch);
  CHECK(f.layers.size() == t.model.hidden_layers() + 2);
  CHECK(f.layers.front().name == "embedding");
  CHECK(f.layers.back().name == "output");
  std::size_t total = 0;
  for (const auto& l : f.layers) {
    total += l.parameter_count;
    std::size_t binned = 0;
    for (auto c : l.histogram.counts) binned += c;
    CHECK(binned == l.parameter_count);
  }
  CHECK(total == t.model.parameter_count());
  for (std::size_t i = 0; i < f.diagonal.count(); ++i) CHECK(f.diagonal.flat(i) >= 0.0);
  setenv("UNLEARN_LENS_THREADS", "1", 1);
  const FisherSummary serial = fisher_diagonal(t.model, t.probe.batch);
  unsetenv("UNLEARN_LENS_THREADS");
  CHECK(serial.diagonal == f.diagonal);
}

TEST_CASE("Fisher histogram bin edges") {
  CHECK(FisherHistogram::bin_of(0.0) == 0);
  CHECK(FisherHistogram::bin_of(1e-30) == 0);
  CHECK(FisherHistogram::bin_of(1e5) == FisherHistogram::kBins - 1);
  CHECK(FisherHistogram::bin_of(1e-9) < FisherHistogram::bin_of(1e-3));
  CHECK(FisherHistogram::bin_center_log10(0) > -20.0);
  CHECK(FisherHistogram::bin_center_log10(FisherHistogram::kBins - 1) < 2.0);
}

TEST_CASE("sampled-label Fisher approaches the empirical one when the model is confident") {
  const auto& t = trained();
  const FisherSummary e = fisher_diagonal(t.model, t.probe.batch, FisherLabels::kEmpirical);
  const FisherSummary s = fisher_diagonal(t.model, t.probe.batch, FisherLabels::kSampled, 3);
  CHECK(s.mean == doctest::Approx(e.mean).epsilon(0.5));
}

TEST_CASE("perturbation probe: zero scale is baseline, budget is exact, drift grows") {
  const auto& t = trained();
  PerturbationConfig pc;
  pc.scales = {0.0, 0.5, 1.0, 2.0, 4.0};
  pc.seed = 5;
  const PerturbationReport r = perturbation_probe(t.model, t.probe, pc);
  REQUIRE(r.points.size() == 5);
  CHECK(r.points[0].one_minus_cka == 0.0);
  CHECK(r.points[0].mean_pca_distance == 0.0);
  CHECK(r.points[0].delta_fisher_mean == 0.0);
  for (std::size_t i = 1; i < r.points.size(); ++i) {
    CHECK(r.points[i].perturbation_norm == doctest::Approx(pc.scales[i]).epsilon(1e-12));
    // 1 - CKA rises with the Gram-matrix change over the sweep.
    CHECK(r.points[i].gram_change > r.points[i - 1].gram_change);
    CHECK(r.points[i].one_minus_cka > r.points[i - 1].one_minus_cka);
  }
}

TEST_CASE("perturbed_model only touches the chosen hidden weights") {
  const auto& t = trained();
  const TinyLM p = perturbed_model(t.model, {1}, 1.0, 3);
  for (std::size_t k = 0; k < p.params().tensors.size(); ++k) {
    if (k == TinyLM::weight_index(1))
      CHECK(p.params().tensors[k] != t.model.params().tensors[k]);
    else
      CHECK(p.params().tensors[k] == t.model.params().tensors[k]);
  }
  CHECK_THROWS_AS(perturbed_model(t.model, {7}, 1.0, 3), ValidationError);
  CHECK(perturbed_model(t.model, {0, 1}, 2.0, 9) == perturbed_model(t.model, {0, 1}, 2.0, 9));
}
