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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "checks.hpp"
#include "unlearn_lens/report.hpp"

using namespace unlearn_lens;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double acc(const ForgettingRun& run, const std::string& phase, const std::string& corpus) {
  for (const auto& m : run.metrics)
    if (m.phase == phase && m.corpus == corpus) return 100.0 * m.accuracy;
  std::fprintf(stderr, "missing metric %s/%s\n", phase.c_str(), corpus.c_str());
  std::exit(2);
}

double mia(const ForgettingRun& run, const std::string& phase, const std::string& corpus) {
  for (const auto& m : run.metrics)
    if (m.phase == phase && m.corpus == corpus && m.mia_auc) return *m.mia_auc;
  std::fprintf(stderr, "missing mia %s/%s\n", phase.c_str(), corpus.c_str());
  std::exit(2);
}

std::string artifacts(const ExperimentConfig& c, const ForgettingRun& run) {
  return metrics_csv(c, {run}) + diagnostics_json(c, {run}).dump(2);
}

}  // namespace

int main() {
  // ---- gradients -------------------------------------------------------------
  {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::size_t params = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto setup = checks::tiny_setup(seed);
      params = setup.model.parameter_count();
      for (const auto& spec : checks::objective_specs(seed)) {
        const auto g = checks::gradient_check(spec, setup);
        if (g.max_rel > worst) {
          worst = g.max_rel;
          worst_name = checks::spec_name(spec);
        }
      }
    }
    const double secs = seconds_since(t0);
    report("gradient_correctness", worst < 1e-4 && secs < 10.0 && params <= 2000,
           fmt("max rel err %.2e (%s), %zu params, 5 seeds, %.1f s", worst, worst_name.c_str(), params, secs));
  }

  // ---- oracles -----------------------------------------------------------------
  {
    const double cka = checks::cka_oracle_check(50, 3);
    const auto eig = checks::eig_oracle_check(50, 8, 11);
    const double auc = checks::auc_oracle_check(50, 5);
    double fisher = 0.0;
    for (std::uint64_t s = 1; s <= 3; ++s) fisher = std::max(fisher, checks::fisher_oracle_check(s));
    const bool pass = cka < 1e-10 && eig.max_value_error < 1e-8 && eig.min_abs_cos > 1.0 - 1e-8 && auc < 1e-12 &&
                      fisher < 1e-12;
    report("oracle_equivalence", pass,
           fmt("cka %.1e, eig value %.1e, 1-|cos| %.1e, auc %.1e, fisher rel %.1e", cka, eig.max_value_error,
               1.0 - eig.min_abs_cos, auc, fisher));
  }

  {
    const double worst = checks::cka_invariance_check(20, 4);
    report("cka_invariance", worst <= 1e-9, fmt("max |1-CKA| %.1e over 20 trials (rotation, alpha 0.1 and 7)", worst));
  }

  {
    const auto dk = checks::davis_kahan_check(100, 8, 7);
    report("davis_kahan", dk.violations == 0 && dk.nondegenerate > 0,
           fmt("%zu violations in %zu non-degenerate of %zu trials, worst sin/bound %.3f", dk.violations,
               dk.nondegenerate, dk.trials, dk.worst_ratio));
  }

  // ---- regimes ----------------------------------------------------------------
  const ExperimentConfig mild = preset("reversible");
  const ExperimentConfig aggressive = preset("irreversible");

  auto t0 = Clock::now();
  const ForgettingRun rev = run_pipeline(mild, 1);
  const double rev_secs = seconds_since(t0);
  {
    const double f0 = acc(rev, "theta0", "forget"), fu = acc(rev, "theta_u", "forget"),
                 fr = acc(rev, "theta_r_forget", "forget");
    const double r0 = acc(rev, "theta0", "retain"), ru = acc(rev, "theta_u", "retain");
    const double auc0 = mia(rev, "theta0", "forget");
    const bool pass = r0 >= 80.0 && auc0 > 0.9 && f0 - fu >= 10.0 && r0 - ru <= 5.0 && std::abs(fr - f0) <= 3.0 &&
                      rev.verdict.label() == "reversible,non-catastrophic" && rev_secs < 120.0;
    report("regime_reversible", pass,
           fmt("retain0 %.1f, mia0 %.3f, forget drop %.1f, retain drop %.1f, |forget_r - forget0| %.1f, %s, %.1f s",
               r0, auc0, f0 - fu, r0 - ru, std::abs(fr - f0), rev.verdict.label().c_str(), rev_secs));
  }

  t0 = Clock::now();
  const ForgettingRun irr = run_pipeline(aggressive, 1);
  const double irr_secs = seconds_since(t0);
  {
    const double f0 = acc(irr, "theta0", "forget"), fu = acc(irr, "theta_u", "forget"),
                 fr = acc(irr, "theta_r_forget", "forget");
    const double r0 = acc(irr, "theta0", "retain"), ru = acc(irr, "theta_u", "retain");
    const bool pass = aggressive.unlearn.n_requests >= 20 && fu < 0.2 * f0 && ru < 0.2 * r0 && f0 - fr >= 20.0 &&
                      irr.verdict.label() == "irreversible,catastrophic" && irr_secs < 600.0;
    report("regime_irreversible", pass,
           fmt("N=%zu, forget %.1f->%.1f, retain %.1f->%.1f, forget after relearn %.1f (%.1f below), %s, %.1f s",
               aggressive.unlearn.n_requests, f0, fu, r0, ru, fr, f0 - fr, irr.verdict.label().c_str(), irr_secs));
  }

  // ---- mean PCA distance ordering --------------------------------------------------
  {
    std::vector<double> um, rm, ua, ra;
    auto collect = [&](const ForgettingRun& m, const ForgettingRun& a) {
      um.push_back(m.mean_pca_distance.at("theta_u"));
      rm.push_back(m.mean_pca_distance.at("theta_r_forget"));
      ua.push_back(a.mean_pca_distance.at("theta_u"));
      ra.push_back(a.mean_pca_distance.at("theta_r_forget"));
    };
    collect(rev, irr);  // seed 1, sharing theta0
    for (std::uint64_t seed = 2; seed <= 4; ++seed) {
      const SyntheticCorpora corpora = make_synthetic_corpora(seed, mild.corpus);
      const TinyLM theta0 = train_base(mild, corpora, seed);
      collect(run_from_base(mild, corpora, theta0, seed), run_from_base(aggressive, corpora, theta0, seed));
    }
    const MeanStd a = mean_std(um), b = mean_std(rm), c = mean_std(ua), d = mean_std(ra);
    const bool pass = c.mean > a.mean && b.mean < a.mean && d.mean > 0.5 * c.mean;
    report("mean_pca_distance_ordering", pass,
           fmt("mild %.3f+-%.3f -> %.3f+-%.3f, aggressive %.3f+-%.3f -> %.3f+-%.3f (4 seeds)", a.mean, a.std, b.mean,
               b.std, c.mean, c.std, d.mean, d.std));
  }

  // ---- MIA ---------------------------------------------------------------------------
  {
    const SyntheticCorpora corpora = make_synthetic_corpora(1, mild.corpus);
    const TinyLM fresh = TinyLM::init(mild.model_for(1));
    const MiaResult f = min_k_mia(fresh, corpora.retain, corpora.holdout, mild.mia_k);
    const MiaResult m = min_k_mia(rev.theta0, corpora.forget, corpora.holdout, mild.mia_k);
    double swap = std::abs(auc_from_scores(m.member_scores, m.nonmember_scores) +
                           auc_from_scores(m.nonmember_scores, m.member_scores) - 1.0);
    swap = std::max(swap, std::abs(auc_from_scores(f.member_scores, f.nonmember_scores) +
                                   auc_from_scores(f.nonmember_scores, f.member_scores) - 1.0));
    const bool pass = std::abs(f.auc - 0.5) <= 0.1 && m.auc > 0.9 && swap <= 1e-12;
    report("mia_sanity", pass,
           fmt("fresh AUC %.3f (%zu vs %zu), trained AUC %.3f, swap residual %.1e", f.auc, f.member_scores.size(),
               f.nonmember_scores.size(), m.auc, swap));
  }

  // ---- perturbation locality ---------------------------------------------------------
  {
    const SyntheticCorpora corpora = make_synthetic_corpora(1, mild.corpus);
    const ProbeSet probe = make_probe_set(corpora.forget, mild.corpus.context_len, mild.probe_count);
    const TinyLM& model = rev.theta0;
    const auto base = capture_activations(model, probe);
    std::vector<std::size_t> all(model.hidden_layers());
    for (std::size_t l = 0; l < all.size(); ++l) all[l] = l;
    const std::vector<std::size_t> single = {model.hidden_layers() - 1};
    // Budget: 10% of the combined hidden-weight Frobenius norm.
    double sq = 0.0;
    for (std::size_t l : all)
      for (double v : model.params().tensors[TinyLM::weight_index(l)].values()) sq += v * v;
    const double scale = 0.1 * std::sqrt(sq);
    int wins = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      const double d_all =
          compare_activations(base, capture_activations(perturbed_model(model, all, scale, s), probe)).mean_pca_distance;
      const double d_one = compare_activations(base, capture_activations(perturbed_model(model, single, scale, s), probe))
                               .mean_pca_distance;
      wins += d_all > d_one ? 1 : 0;
    }
    report("perturbation_locality", wins >= 9,
           fmt("all-layer > last-hidden-layer in %d/10 trials at ||E||_F = %.3f on trained theta0", wins, scale));
  }

  // ---- determinism ---------------------------------------------------------------------
  {
    // Second runs with a different thread cap.
    setenv("UNLEARN_LENS_THREADS", "1", 1);
    const bool same_rev = artifacts(mild, rev) == artifacts(mild, run_pipeline(mild, 1));
    setenv("UNLEARN_LENS_THREADS", "3", 1);
    const bool same_irr = artifacts(aggressive, irr) == artifacts(aggressive, run_pipeline(aggressive, 1));
    unsetenv("UNLEARN_LENS_THREADS");
    report("pipeline_determinism", same_rev && same_irr,
           fmt("metrics.csv + diagnostics.json identical: reversible %s, irreversible %s", same_rev ? "yes" : "no",
               same_irr ? "yes" : "no"));
  }

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
