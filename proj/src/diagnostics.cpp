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

#include "unlearn_lens/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unlearn_lens/error.hpp"
#include "unlearn_lens/parallel.hpp"
#include "unlearn_lens/rng.hpp"

namespace unlearn_lens {

ProbeSet make_probe_set(const Corpus& corpus, std::size_t context_len, std::size_t count) {
  if (count == 0) throw ValidationError("probe count must be positive");
  corpus.validate(context_len);
  std::vector<WindowRef> picked;
  std::size_t max_len = 0;
  for (const auto& s : corpus.sequences) max_len = std::max(max_len, s.size());
  for (std::size_t back = 0; picked.size() < count && back + context_len < max_len; ++back) {
    for (std::size_t s = 0; s < corpus.size() && picked.size() < count; ++s) {
      const std::size_t len = corpus.sequences[s].size();
      if (len < context_len + 1 + back) continue;
      picked.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(len - 1 - back)});
    }
  }
  ProbeSet probe;
  probe.source = corpus.domain;
  probe.batch = make_batch(corpus, picked, context_len);
  return probe;
}

std::vector<Matrix> capture_activations(const TinyLM& model, const ProbeSet& probe) {
  if (probe.count() == 0) throw ValidationError("empty probe set");
  return forward(model, probe.batch, true).hidden;
}

// ---- PCA -------------------------------------------------------------------

LayerPca pca_layer(const Matrix& activations) {
  if (activations.rows() < 3) throw ValidationError("PCA needs at least 3 probe rows");
  if (activations.cols() < 2) throw ValidationError("PCA needs at least 2 activation columns");
  LayerPca out;
  out.mean = column_means(activations);
  Matrix cov = covariance(center_columns(activations));
  double trace = 0.0;
  for (std::size_t i = 0; i < cov.rows(); ++i) trace += cov(i, i);
  if (!(trace > 0.0)) throw NumericalError("collapsed layer");
  // Solve at unit scale so the residual tolerance is relative to the spectrum.
  double scale = 0.0;
  for (double v : cov.values()) scale = std::max(scale, std::abs(v));
  for (double& v : cov.values()) v /= scale;
  const TopEigen eig = sym_top_eigs(cov, 2);
  out.lambda1 = eig.pairs[0].value * scale;
  out.lambda2 = eig.pairs[1].value * scale;
  out.c1 = eig.pairs[0].vector;
  out.c2 = eig.pairs[1].vector;
  out.degenerate_gap = eig.degenerate_gap;
  out.p = {dot(out.mean, out.c1), dot(out.mean, out.c2)};
  return out;
}

std::vector<LayerPca> pca_state(const std::vector<Matrix>& activations) {
  std::vector<LayerPca> out(activations.size());
  parallel_for(activations.size(), [&](std::size_t i) { out[i] = pca_layer(activations[i]); });
  return out;
}

std::vector<LayerPca> pca_state(const TinyLM& model, const ProbeSet& probe) {
  return pca_state(capture_activations(model, probe));
}

namespace {
void check_pair(const std::vector<LayerPca>& a, const std::vector<LayerPca>& b) {
  if (a.size() != b.size()) throw ValidationError("PCA states have different layer counts");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].c1.size() != b[i].c1.size())
      throw ValidationError("PCA states differ in width at layer " + std::to_string(i));
}
}  // namespace

std::vector<Similarity> pca_similarity(const std::vector<LayerPca>& orig, const std::vector<LayerPca>& upd) {
  check_pair(orig, upd);
  std::vector<Similarity> out(orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    out[i].raw = cosine(orig[i].c1, upd[i].c1);
    out[i].abs = std::abs(out[i].raw);
    out[i].degenerate_gap = orig[i].degenerate_gap || upd[i].degenerate_gap;
  }
  return out;
}

std::vector<std::array<double, 2>> pca_shift(const std::vector<LayerPca>& orig, const std::vector<LayerPca>& upd) {
  check_pair(orig, upd);
  std::vector<std::array<double, 2>> out(orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    std::vector<double> delta(orig[i].mean.size());
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = upd[i].mean[j] - orig[i].mean[j];
    out[i] = {dot(delta, orig[i].c1), dot(delta, orig[i].c2)};
  }
  return out;
}

double mean_pca_distance(const std::vector<std::array<double, 2>>& shifts) {
  if (shifts.empty()) throw ValidationError("mean PCA distance needs at least one layer");
  double total = 0.0;
  for (const auto& s : shifts) total += std::hypot(s[0], s[1]);
  return total / static_cast<double>(shifts.size());
}

// ---- CKA ---------------------------------------------------------------------

namespace {
// ||A^T B||_F^2 for row-aligned A, B.
double cross_norm_sq(const Matrix& a, const Matrix& b) {
  const Matrix c = matmul(transpose(a), b);
  double s = 0.0;
  for (double v : c.values()) s += v * v;
  return s;
}
}  // namespace

double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ValidationError("CKA inputs need equal row counts");
  if (x.rows() < 2) throw ValidationError("CKA needs at least 2 rows");
  const Matrix xc = center_columns(x);
  const Matrix yc = center_columns(y);
  if (frobenius_norm(xc) == 0.0 || frobenius_norm(yc) == 0.0) throw NumericalError("degenerate activations");
  // Tr(Kx Ky) = ||Y^T X||_F^2 and Tr(Kx^2) = ||X^T X||_F^2 for centered X, Y.
  const double xy = cross_norm_sq(yc, xc);
  const double xx = cross_norm_sq(xc, xc);
  const double yy = cross_norm_sq(yc, yc);
  if (!(xx > 0.0 && yy > 0.0)) throw NumericalError("degenerate activations");
  return std::clamp(xy / std::sqrt(xx * yy), 0.0, 1.0);
}

// ---- Fisher ------------------------------------------------------------------

std::size_t FisherHistogram::bin_of(double value) noexcept {
  if (!(value > kLow)) return 0;
  const double lo = std::log10(kLow);
  const double hi = std::log10(kHigh);
  const double pos = (std::log10(value) - lo) / (hi - lo) * static_cast<double>(kBins);
  if (pos >= static_cast<double>(kBins)) return kBins - 1;
  return static_cast<std::size_t>(pos);
}

double FisherHistogram::bin_center_log10(std::size_t b) noexcept {
  const double lo = std::log10(kLow);
  const double width = (std::log10(kHigh) - lo) / static_cast<double>(kBins);
  return lo + (static_cast<double>(b) + 0.5) * width;
}

double FisherHistogram::peak_log10() const noexcept {
  const auto it = std::max_element(counts.begin(), counts.end());
  return bin_center_log10(static_cast<std::size_t>(it - counts.begin()));
}

namespace {

// Neumaier-compensated running sums, one per parameter.
struct CompensatedSums {
  std::vector<double> sum;
  std::vector<double> comp;

  explicit CompensatedSums(std::size_t n) : sum(n, 0.0), comp(n, 0.0) {}

  void add(std::size_t i, double v) {
    const double t = sum[i] + v;
    if (std::abs(sum[i]) >= std::abs(v))
      comp[i] += (sum[i] - t) + v;
    else
      comp[i] += (v - t) + sum[i];
    sum[i] = t;
  }
  [[nodiscard]] double value(std::size_t i) const { return sum[i] + comp[i]; }
};

constexpr std::size_t kFisherChunks = 16;

}  // namespace

FisherSummary fisher_diagonal(const TinyLM& model, const Batch& probe, FisherLabels labels, std::uint64_t seed) {
  const std::size_t n = probe.size();
  if (n == 0) throw ValidationError("empty probe set");
  const std::size_t P = model.parameter_count();
  const std::size_t vocab = model.config().vocab_size;

  // Fixed chunking keeps the summation order independent of the thread count.
  const std::size_t chunks = std::min(kFisherChunks, n);
  std::vector<CompensatedSums> partial(chunks, CompensatedSums(P));
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    auto& acc = partial[c];
    for (std::size_t w = begin; w < end; ++w) {
      Batch one;
      one.context_len = probe.context_len;
      const auto ctx = probe.context(w);
      one.contexts.assign(ctx.begin(), ctx.end());
      one.targets.push_back(probe.targets[w]);
      one.groups.push_back(0);
      one.group_count = 1;
      if (labels == FisherLabels::kSampled) {
        const ForwardTrace t = forward(model, one, false);
        Rng rng(derive_seed(seed, w));
        const double u = rng.uniform();
        double cum = 0.0;
        Token y = static_cast<Token>(vocab - 1);
        for (std::size_t v = 0; v < vocab; ++v) {
          cum += std::exp(t.log_probs(0, v));
          if (u < cum) {
            y = static_cast<Token>(v);
            break;
          }
        }
        one.targets[0] = y;
      }
      // d log p / dw = -dCE/dw; the sign vanishes on squaring.
      const LossGrads g = loss_and_grads(model, one);
      std::size_t i = 0;
      for (const auto& t : g.grads.tensors)
        for (double v : t.values()) acc.add(i++, v * v);
    }
  });

  FisherSummary out;
  out.parameter_count = P;
  out.diagonal = model.params().zeros_like();
  {
    CompensatedSums total(P);
    for (const auto& part : partial)
      for (std::size_t i = 0; i < P; ++i) total.add(i, part.value(i));
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < P; ++i) out.diagonal.flat(i) = total.value(i) * inv;
  }

  // Layer grouping over tensors: embedding | (W_i, b_i) | (W_out, b_out).
  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
  groups.push_back({"embedding", {TinyLM::embedding_index()}});
  for (std::size_t l = 0; l < model.hidden_layers(); ++l)
    groups.push_back({"hidden_" + std::to_string(l), {TinyLM::weight_index(l), TinyLM::bias_index(l)}});
  groups.push_back({"output", {model.output_weight_index(), model.output_bias_index()}});

  CompensatedSums grand(1);
  for (const auto& [name, tensors] : groups) {
    FisherLayer layer;
    layer.name = name;
    CompensatedSums s(1);
    for (std::size_t t : tensors) {
      for (double v : out.diagonal.tensors[t].values()) {
        s.add(0, v);
        grand.add(0, v);
        ++layer.histogram.counts[FisherHistogram::bin_of(v)];
        ++layer.parameter_count;
      }
    }
    layer.mean = s.value(0) / static_cast<double>(layer.parameter_count);
    out.layers.push_back(std::move(layer));
  }
  out.mean = grand.value(0) / static_cast<double>(P);
  return out;
}

// ---- MIA -----------------------------------------------------------------------

double min_k_score(std::span<const double> token_log_probs, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw ValidationError("k must be in (0, 1]");
  if (token_log_probs.empty()) throw ValidationError("no token log-probabilities to score");
  std::vector<double> v(token_log_probs.begin(), token_log_probs.end());
  std::sort(v.begin(), v.end());
  const auto take = std::min(
      v.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(k * static_cast<double>(v.size()) - 1e-9))));
  double s = 0.0;
  for (std::size_t i = 0; i < take; ++i) s += v[i];
  return s / static_cast<double>(take);
}

double auc_from_scores(std::span<const double> members, std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) throw ValidationError("AUC needs members and non-members");
  struct Item {
    double score;
    bool member;
  };
  std::vector<Item> all;
  all.reserve(members.size() + nonmembers.size());
  for (double s : members) all.push_back({s, true});
  for (double s : nonmembers) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Mid-ranks (1-based) over tie blocks; doubled to stay in integers.
  double rank_sum2 = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double mid2 = static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (all[t].member) rank_sum2 += mid2;
    i = j;
  }
  const double n = static_cast<double>(members.size());
  const double m = static_cast<double>(nonmembers.size());
  const double u = rank_sum2 / 2.0 - n * (n + 1.0) / 2.0;
  return u / (n * m);
}

namespace {
std::vector<double> sequence_scores(const TinyLM& model, const Corpus& corpus, double k, std::size_t& skipped) {
  const std::size_t C = model.config().context_len;
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (corpus.sequences[s].size() >= C + 1)
      keep.push_back(s);
    else
      ++skipped;
  }
  std::vector<double> scores;
  if (keep.empty()) return scores;
  const EvalResult r = evaluate(model, corpus.subset(keep));
  for (const auto& lp : r.token_log_probs) scores.push_back(min_k_score(lp, k));
  return scores;
}
}  // namespace

MiaResult min_k_mia(const TinyLM& model, const Corpus& members, const Corpus& nonmembers, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw ValidationError("k must be in (0, 1]");
  if (members.size() == 0 || nonmembers.size() == 0) throw ValidationError("MIA needs non-empty corpora");
  MiaResult out;
  out.k_fraction = k;
  out.member_scores = sequence_scores(model, members, k, out.skipped);
  out.nonmember_scores = sequence_scores(model, nonmembers, k, out.skipped);
  out.auc = auc_from_scores(out.member_scores, out.nonmember_scores);
  return out;
}

// ---- per-layer comparison ------------------------------------------------------

StateComparison compare_activations(const std::vector<Matrix>& orig, const std::vector<Matrix>& upd) {
  if (orig.size() != upd.size()) throw ValidationError("activation sets have different layer counts");
  if (orig.empty()) throw ValidationError("no layers to compare");
  for (std::size_t i = 0; i < orig.size(); ++i)
    if (orig[i].rows() != upd[i].rows() || orig[i].cols() != upd[i].cols())
      throw ValidationError("activation shapes differ at layer " + std::to_string(i));
  const auto po = pca_state(orig);
  const auto pu = pca_state(upd);
  const auto sim = pca_similarity(po, pu);
  const auto shift = pca_shift(po, pu);
  StateComparison out;
  out.layers.resize(orig.size());
  parallel_for(orig.size(), [&](std::size_t i) {
    auto& d = out.layers[i];
    d.layer = i;
    d.pca_similarity = sim[i].raw;
    d.pca_similarity_abs = sim[i].abs;
    d.shift_pc1 = shift[i][0];
    d.shift_pc2 = shift[i][1];
    d.cka = linear_cka(orig[i], upd[i]);
    d.eigengap = po[i].lambda1 - po[i].lambda2;
    d.degenerate_gap = sim[i].degenerate_gap;
  });
  out.mean_pca_distance = mean_pca_distance(shift);
  return out;
}

// ---- perturbation probe -----------------------------------------------------------

TinyLM perturbed_model(const TinyLM& model, const std::vector<std::size_t>& layers, double scale, std::uint64_t seed) {
  if (!std::isfinite(scale) || scale < 0.0) throw ValidationError("perturbation scale must be finite and >= 0");
  TinyLM out = model;
  if (scale == 0.0 || layers.empty()) return out;
  const double per_layer = scale / std::sqrt(static_cast<double>(layers.size()));
  for (std::size_t l : layers) {
    if (l >= model.hidden_layers()) throw ValidationError("perturbation layer " + std::to_string(l) + " out of range");
    auto w = out.params().tensors[TinyLM::weight_index(l)].values();
    Rng rng(derive_seed(seed, l));
    std::vector<double> e(w.size());
    for (double& v : e) v = rng.normal();
    const double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
    double sq = 0.0;
    for (double& v : e) {
      v -= mean;
      sq += v * v;
    }
    const double f = per_layer / std::sqrt(sq);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += f * e[i];
  }
  return out;
}

namespace {
// ||K~_a - K~_b||_F with K~ = Xc Xc^T.
double gram_change(const Matrix& a, const Matrix& b) {
  const Matrix ka = gram(center_columns(a));
  const Matrix kb = gram(center_columns(b));
  double s = 0.0;
  for (std::size_t i = 0; i < ka.size(); ++i) {
    const double d = ka.values()[i] - kb.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}
}  // namespace

PerturbationReport perturbation_probe(const TinyLM& model, const ProbeSet& probe, const PerturbationConfig& config) {
  PerturbationReport report;
  report.layers = config.layers;
  if (report.layers.empty())
    for (std::size_t l = 0; l < model.hidden_layers(); ++l) report.layers.push_back(l);

  const auto base_acts = capture_activations(model, probe);
  double base_fisher = 0.0;
  if (config.with_fisher) base_fisher = fisher_diagonal(model, probe.batch).mean;

  for (double scale : config.scales) {
    const TinyLM pert = perturbed_model(model, report.layers, scale, config.seed);
    const auto acts = capture_activations(pert, probe);
    const StateComparison cmp = compare_activations(base_acts, acts);
    PerturbationPoint pt;
    pt.scale = scale;
    double sq = 0.0;
    for (std::size_t l : report.layers) {
      const auto a = model.params().tensors[TinyLM::weight_index(l)].values();
      const auto b = pert.params().tensors[TinyLM::weight_index(l)].values();
      for (std::size_t i = 0; i < a.size(); ++i) sq += (b[i] - a[i]) * (b[i] - a[i]);
    }
    pt.perturbation_norm = std::sqrt(sq);
    const double L = static_cast<double>(cmp.layers.size());
    for (std::size_t i = 0; i < cmp.layers.size(); ++i) {
      pt.one_minus_similarity += (1.0 - cmp.layers[i].pca_similarity_abs) / L;
      pt.one_minus_cka += (1.0 - cmp.layers[i].cka) / L;
      pt.gram_change += gram_change(base_acts[i], acts[i]) / L;
    }
    pt.mean_pca_distance = cmp.mean_pca_distance;
    if (config.with_fisher) pt.delta_fisher_mean = fisher_diagonal(pert, probe.batch).mean - base_fisher;
    report.points.push_back(pt);
  }
  return report;
}

}  // namespace unlearn_lens
