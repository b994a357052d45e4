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

#include "unlearn_lens/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "unlearn_lens/binary_io.hpp"
#include "unlearn_lens/rng.hpp"

namespace unlearn_lens {

std::string to_string(Domain d) {
  switch (d) {
    case Domain::kForget:
      return "forget";
    case Domain::kRetain:
      return "retain";
    case Domain::kUnrelated:
      return "unrelated";
  }
  return "unknown";
}

Domain domain_from_string(const std::string& s) {
  if (s == "forget") return Domain::kForget;
  if (s == "retain") return Domain::kRetain;
  if (s == "unrelated") return Domain::kUnrelated;
  throw ValidationError("unknown domain '" + s + "'");
}

void Corpus::validate(std::size_t context_len) const {
  if (template_ids.size() != sequences.size()) throw ValidationError("corpus template ids do not match sequences");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    if (seq.size() < context_len + 1)
      throw ValidationError("sequence " + std::to_string(i) + " shorter than context_len + 1");
    for (Token t : seq)
      if (t >= vocab_size) throw ValidationError("token id " + std::to_string(t) + " out of vocabulary");
  }
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out;
  out.vocab_size = vocab_size;
  out.domain = domain;
  for (std::size_t i : indices) {
    if (i >= sequences.size()) throw ValidationError("corpus subset index out of range");
    out.sequences.push_back(sequences[i]);
    out.template_ids.push_back(template_ids[i]);
  }
  return out;
}

std::size_t unrelated_range_start(const CorpusSpec& spec) {
  const auto reserved = static_cast<std::size_t>(
      std::ceil(spec.unrelated_vocab_fraction * static_cast<double>(spec.vocab_size)));
  return spec.vocab_size - reserved;
}

namespace {

std::vector<double> zipf_cdf(std::size_t n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;
  return cdf;
}

Token draw(Rng& rng, const std::vector<double>& cdf, std::size_t offset) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto idx = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), std::ssize(cdf) - 1));
  return static_cast<Token>(offset + idx);
}

Corpus generate(Rng& rng, Domain domain, std::size_t count, const CorpusSpec& spec, const std::vector<double>& cdf,
                std::size_t offset, std::uint32_t& next_template) {
  Corpus c;
  c.vocab_size = spec.vocab_size;
  c.domain = domain;
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<Token> seq(spec.sequence_length);
    for (auto& t : seq) t = draw(rng, cdf, offset);
    c.sequences.push_back(std::move(seq));
    c.template_ids.push_back(next_template++);
  }
  return c;
}

}  // namespace

SyntheticCorpora make_synthetic_corpora(std::uint64_t seed, const CorpusSpec& spec) {
  if (spec.vocab_size < 8) throw ValidationError("corpus spec: vocab_size must be >= 8");
  if (spec.context_len < 1) throw ValidationError("corpus spec: context_len must be >= 1");
  if (spec.sequence_length < spec.context_len + 1)
    throw ValidationError("corpus spec: sequence_length must be >= context_len + 1");
  if (spec.forget_count < 1 || spec.retain_count < 1 || spec.unrelated_count < 1 || spec.holdout_count < 1)
    throw ValidationError("corpus spec: every corpus needs at least one sequence");
  if (!(spec.unrelated_vocab_fraction > 0.0 && spec.unrelated_vocab_fraction < 1.0))
    throw ValidationError("corpus spec: unrelated_vocab_fraction must be in (0, 1)");
  const std::size_t split = unrelated_range_start(spec);
  if (split < 2 || spec.vocab_size - split < 2)
    throw ValidationError("corpus spec: both vocabulary ranges need at least two tokens");

  const auto main_cdf = zipf_cdf(split, spec.zipf_exponent);
  const auto side_cdf = zipf_cdf(spec.vocab_size - split, spec.zipf_exponent);

  // Separate streams so growing one corpus does not reshuffle the others.
  std::uint32_t next_template = 0;
  SyntheticCorpora out;
  Rng forget_rng(derive_seed(seed, 1));
  out.forget = generate(forget_rng, Domain::kForget, spec.forget_count, spec, main_cdf, 0, next_template);
  Rng retain_rng(derive_seed(seed, 2));
  out.retain = generate(retain_rng, Domain::kRetain, spec.retain_count, spec, main_cdf, 0, next_template);
  Rng unrelated_rng(derive_seed(seed, 3));
  out.unrelated =
      generate(unrelated_rng, Domain::kUnrelated, spec.unrelated_count, spec, side_cdf, split, next_template);
  Rng holdout_rng(derive_seed(seed, 4));
  out.holdout = generate(holdout_rng, Domain::kForget, spec.holdout_count, spec, main_cdf, 0, next_template);
  return out;
}

void Batch::append(const Batch& other) {
  if (size() == 0 && context_len == 0) context_len = other.context_len;
  if (other.context_len != context_len) throw ValidationError("batch context length mismatch");
  contexts.insert(contexts.end(), other.contexts.begin(), other.contexts.end());
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
  for (auto g : other.groups) groups.push_back(static_cast<std::uint32_t>(g + group_count));
  keys.insert(keys.end(), other.keys.begin(), other.keys.end());
  group_count += other.group_count;
}

std::vector<WindowRef> enumerate_windows(const Corpus& corpus, std::size_t context_len) {
  std::vector<WindowRef> out;
  for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
    const auto len = corpus.sequences[s].size();
    for (std::size_t p = context_len; p < len; ++p)
      out.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(p)});
  }
  return out;
}

Batch make_batch(const Corpus& corpus, std::span<const WindowRef> windows, std::size_t context_len) {
  Batch b;
  b.context_len = context_len;
  b.contexts.reserve(windows.size() * context_len);
  b.targets.reserve(windows.size());
  std::unordered_map<std::uint32_t, std::uint32_t> group_of;
  for (const auto& w : windows) {
    if (w.sequence >= corpus.sequences.size()) throw ValidationError("window sequence out of range");
    const auto& seq = corpus.sequences[w.sequence];
    if (w.target_pos < context_len || w.target_pos >= seq.size()) throw ValidationError("window out of range");
    b.contexts.insert(b.contexts.end(), seq.begin() + (w.target_pos - context_len), seq.begin() + w.target_pos);
    b.targets.push_back(seq[w.target_pos]);
    auto [it, inserted] = group_of.try_emplace(w.sequence, static_cast<std::uint32_t>(group_of.size()));
    b.groups.push_back(it->second);
    b.keys.push_back((static_cast<std::uint64_t>(w.sequence) << 32) | w.target_pos);
  }
  b.group_count = group_of.size();
  return b;
}

Batch corpus_batch(const Corpus& corpus, std::size_t context_len) {
  const auto windows = enumerate_windows(corpus, context_len);
  return make_batch(corpus, windows, context_len);
}

WindowSampler::WindowSampler(std::vector<WindowRef> windows, std::uint64_t seed)
    : windows_(std::move(windows)), seed_(seed) {
  if (windows_.empty()) throw ValidationError("window sampler needs at least one window");
  reshuffle();
}

void WindowSampler::reshuffle() {
  order_ = windows_;
  Rng rng(derive_seed(seed_, epoch_));
  rng.shuffle(std::span<WindowRef>(order_));
  cursor_ = 0;
}

std::vector<WindowRef> WindowSampler::next(std::size_t count) {
  std::vector<WindowRef> out;
  out.reserve(count);
  while (out.size() < count) {
    if (cursor_ == order_.size()) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

// ---- parameters ----------------------------------------------------------

std::size_t ParamSet::count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.emplace_back(t.rows(), t.cols());
  return out;
}

void ParamSet::add_scaled(const ParamSet& other, double scale) {
  if (other.tensors.size() != tensors.size()) throw ValidationError("parameter set shape mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto dst = tensors[i].values();
    const auto src = other.tensors[i].values();
    if (dst.size() != src.size()) throw ValidationError("parameter tensor shape mismatch");
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

void ParamSet::scale(double factor) {
  for (auto& t : tensors)
    for (double& v : t.values()) v *= factor;
}

double ParamSet::global_norm() const {
  double s = 0.0;
  for (const auto& t : tensors)
    for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(tensors.begin(), tensors.end(), [](const Matrix& m) { return m.all_finite(); });
}

double ParamSet::flat(std::size_t i) const {
  for (const auto& t : tensors) {
    if (i < t.size()) return t.values()[i];
    i -= t.size();
  }
  throw ValidationError("flat parameter index out of range");
}

double& ParamSet::flat(std::size_t i) {
  for (auto& t : tensors) {
    if (i < t.size()) return t.values()[i];
    i -= t.size();
  }
  throw ValidationError("flat parameter index out of range");
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(const ModelConfig& c) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  shapes.emplace_back(c.vocab_size, c.embed_dim);
  std::size_t in = c.context_len * c.embed_dim;
  for (std::size_t h : c.hidden) {
    shapes.emplace_back(h, in);
    shapes.emplace_back(1, h);
    in = h;
  }
  shapes.emplace_back(c.vocab_size, in);
  shapes.emplace_back(1, c.vocab_size);
  return shapes;
}

void check_config(const ModelConfig& c) {
  if (c.vocab_size < 2 || c.context_len < 1 || c.embed_dim < 1 || c.hidden.empty())
    throw ValidationError("model config: vocab >= 2, context >= 1, embed >= 1 and at least one hidden layer");
  for (std::size_t h : c.hidden)
    if (h < 1) throw ValidationError("model config: hidden widths must be positive");
}

}  // namespace

TinyLM TinyLM::zeros(const ModelConfig& config) {
  check_config(config);
  ParamSet p;
  for (auto [r, c] : tensor_shapes(config)) p.tensors.emplace_back(r, c);
  return {config, std::move(p)};
}

TinyLM TinyLM::init(const ModelConfig& config) {
  TinyLM m = zeros(config);
  const std::size_t L = config.hidden.size();
  for (std::size_t t = 0; t < m.params_.tensors.size(); ++t) {
    auto& tensor = m.params_.tensors[t];
    double stddev = 0.0;
    if (t == embedding_index()) {
      stddev = 1.0;
    } else if (t == 1 + 2 * L) {
      stddev = 0.5 / std::sqrt(static_cast<double>(tensor.cols()));
    } else if (t % 2 == 1) {
      stddev = 1.0 / std::sqrt(static_cast<double>(tensor.cols()));
    }
    if (stddev == 0.0) continue;
    Rng rng(derive_seed(config.seed, t + 1));
    for (double& v : tensor.values()) v = stddev * rng.normal();
  }
  return m;
}

std::vector<std::string> TinyLM::tensor_names() const {
  std::vector<std::string> names{"embedding"};
  for (std::size_t i = 0; i < hidden_layers(); ++i) {
    names.push_back("hidden" + std::to_string(i + 1) + ".weight");
    names.push_back("hidden" + std::to_string(i + 1) + ".bias");
  }
  names.emplace_back("output.weight");
  names.emplace_back("output.bias");
  return names;
}

TinyLM model_from_params(const ModelConfig& config, ParamSet params) {
  TinyLM shell = TinyLM::zeros(config);
  const auto& expect = shell.params().tensors;
  if (params.tensors.size() != expect.size()) throw ValidationError("parameter tensor count mismatch");
  for (std::size_t i = 0; i < expect.size(); ++i)
    if (params.tensors[i].rows() != expect[i].rows() || params.tensors[i].cols() != expect[i].cols())
      throw ValidationError("parameter tensor " + std::to_string(i) + " has the wrong shape");
  shell.params() = std::move(params);
  return shell;
}

// ---- forward / backward ---------------------------------------------------

double gelu(double x) noexcept {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) noexcept {
  constexpr double k = 0.7978845608028654;
  const double t = std::tanh(k * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

namespace {

struct Cache {
  Matrix input;                 // n x (C*E)
  std::vector<Matrix> pre;      // per hidden layer
  std::vector<Matrix> post;     // per hidden layer
  Matrix logits;
  Matrix log_probs;
};

// out = in * W^T + b  (W is out x in, row-major)
void affine(const Matrix& in, const Matrix& w, const Matrix& b, Matrix& out) {
  out = Matrix(in.rows(), w.rows());
  const auto bias = b.values();
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < w.rows(); ++o) {
      const auto wr = w.row(o);
      double acc = bias[o];
      for (std::size_t j = 0; j < x.size(); ++j) acc += wr[j] * x[j];
      y[o] = acc;
    }
  }
}

void check_finite(const Matrix& m, const std::string& where) {
  if (!m.all_finite()) throw NumericalError("non-finite values in " + where);
}

Cache run_forward(const TinyLM& model, const Batch& batch) {
  const auto& cfg = model.config();
  if (batch.context_len != cfg.context_len)
    throw ValidationError("window length " + std::to_string(batch.context_len) + " != context_len " +
                          std::to_string(cfg.context_len));
  const auto& p = model.params().tensors;
  const std::size_t n = batch.size();
  const std::size_t E = cfg.embed_dim;
  Cache c;
  c.input = Matrix(n, cfg.context_len * E);
  const auto& emb = p[TinyLM::embedding_index()];
  for (std::size_t r = 0; r < n; ++r) {
    const auto ctx = batch.context(r);
    auto row = c.input.row(r);
    for (std::size_t k = 0; k < ctx.size(); ++k) {
      if (ctx[k] >= cfg.vocab_size) throw ValidationError("token id " + std::to_string(ctx[k]) + " out of vocabulary");
      const auto e = emb.row(ctx[k]);
      std::copy(e.begin(), e.end(), row.begin() + static_cast<std::ptrdiff_t>(k * E));
    }
    if (batch.targets[r] >= cfg.vocab_size)
      throw ValidationError("target id " + std::to_string(batch.targets[r]) + " out of vocabulary");
  }

  const Matrix* in = &c.input;
  for (std::size_t l = 0; l < model.hidden_layers(); ++l) {
    Matrix z;
    affine(*in, p[TinyLM::weight_index(l)], p[TinyLM::bias_index(l)], z);
    Matrix a(z.rows(), z.cols());
    auto zv = z.values();
    auto av = a.values();
    for (std::size_t i = 0; i < zv.size(); ++i) av[i] = gelu(zv[i]);
    check_finite(a, "hidden layer " + std::to_string(l));
    c.pre.push_back(std::move(z));
    c.post.push_back(std::move(a));
    in = &c.post.back();
  }
  affine(*in, p[model.output_weight_index()], p[model.output_bias_index()], c.logits);
  check_finite(c.logits, "output layer " + std::to_string(model.hidden_layers()));

  c.log_probs = Matrix(n, cfg.vocab_size);
  for (std::size_t r = 0; r < n; ++r) {
    const auto z = c.logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    auto lp = c.log_probs.row(r);
    for (std::size_t v = 0; v < z.size(); ++v) lp[v] = z[v] - lse;
  }
  return c;
}

ParamSet run_backward(const TinyLM& model, const Batch& batch, const Cache& c, const Matrix& dlogits) {
  const auto& cfg = model.config();
  const auto& p = model.params().tensors;
  ParamSet g = model.params().zeros_like();
  const std::size_t n = batch.size();
  const std::size_t L = model.hidden_layers();

  // Output layer.
  const Matrix& last = L == 0 ? c.input : c.post[L - 1];
  {
    auto& gw = g.tensors[model.output_weight_index()];
    auto gb = g.tensors[model.output_bias_index()].values();
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = dlogits.row(r);
      const auto a = last.row(r);
      for (std::size_t v = 0; v < d.size(); ++v) {
        const double dv = d[v];
        if (dv == 0.0) continue;
        gb[v] += dv;
        auto row = gw.row(v);
        for (std::size_t j = 0; j < a.size(); ++j) row[j] += dv * a[j];
      }
    }
  }
  Matrix delta(n, last.cols());
  {
    const auto& w = p[model.output_weight_index()];
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = dlogits.row(r);
      auto out = delta.row(r);
      for (std::size_t v = 0; v < d.size(); ++v) {
        const double dv = d[v];
        if (dv == 0.0) continue;
        const auto wr = w.row(v);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += dv * wr[j];
      }
    }
  }

  // Hidden layers, last to first. `delta` holds dL/d(post activation).
  for (std::size_t l = L; l-- > 0;) {
    auto dv = delta.values();
    const auto zv = c.pre[l].values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= gelu_derivative(zv[i]);
    const Matrix& in = l == 0 ? c.input : c.post[l - 1];
    auto& gw = g.tensors[TinyLM::weight_index(l)];
    auto gb = g.tensors[TinyLM::bias_index(l)].values();
    const auto& w = p[TinyLM::weight_index(l)];
    Matrix next(n, in.cols());
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = delta.row(r);
      const auto x = in.row(r);
      auto nx = next.row(r);
      for (std::size_t o = 0; o < d.size(); ++o) {
        const double dz = d[o];
        if (dz == 0.0) continue;
        gb[o] += dz;
        auto grow = gw.row(o);
        const auto wr = w.row(o);
        for (std::size_t j = 0; j < x.size(); ++j) {
          grow[j] += dz * x[j];
          nx[j] += dz * wr[j];
        }
      }
    }
    delta = std::move(next);
  }

  // Scatter into the embedding table.
  auto& ge = g.tensors[TinyLM::embedding_index()];
  const std::size_t E = cfg.embed_dim;
  for (std::size_t r = 0; r < n; ++r) {
    const auto ctx = batch.context(r);
    const auto d = delta.row(r);
    for (std::size_t k = 0; k < ctx.size(); ++k) {
      auto row = ge.row(ctx[k]);
      for (std::size_t e = 0; e < E; ++e) row[e] += d[k * E + e];
    }
  }
  return g;
}

}  // namespace

ForwardTrace forward(const TinyLM& model, const Batch& batch, bool capture) {
  Cache c = run_forward(model, batch);
  ForwardTrace t;
  if (capture) t.hidden = std::move(c.post);
  t.logits = std::move(c.logits);
  t.log_probs = std::move(c.log_probs);
  return t;
}

LossGrads loss_with_head(const TinyLM& model, const Batch& batch, const LossHead& head) {
  if (batch.size() == 0) throw ValidationError("empty batch");
  Cache c = run_forward(model, batch);
  Matrix dlogits(c.log_probs.rows(), c.log_probs.cols());
  const double loss = head(c.log_probs, dlogits);
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss at output layer " + std::to_string(model.hidden_layers()));
  LossGrads out;
  out.loss = loss;
  out.grads = run_backward(model, batch, c, dlogits);
  return out;
}

LossGrads loss_and_grads(const TinyLM& model, const Batch& batch) {
  return loss_with_head(model, batch, [&batch](const Matrix& lp, Matrix& d) {
    const std::size_t n = lp.rows();
    const double inv = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = lp.row(r);
      auto drow = d.row(r);
      for (std::size_t v = 0; v < row.size(); ++v) drow[v] = std::exp(row[v]) * inv;
      drow[batch.targets[r]] -= inv;
      loss -= row[batch.targets[r]];
    }
    return loss * inv;
  });
}

// ---- optimizer -------------------------------------------------------------

double scheduled_lr(const AdamWConfig& config, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw ValidationError("schedule needs total_steps > 0");
  const double total = static_cast<double>(total_steps);
  const double warm = config.warmup_fraction * total;
  const double s = static_cast<double>(step);
  if (s < warm) return config.peak_lr * (s + 1.0) / (warm + 1.0);
  const double span = total - warm;
  const double progress = span > 0.0 ? std::min(1.0, (s - warm) / span) : 1.0;
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return config.peak_lr * (config.floor_fraction + (1.0 - config.floor_fraction) * cosine);
}

OptimizerState OptimizerState::for_model(const TinyLM& model, const AdamWConfig& config) {
  OptimizerState s;
  s.config = config;
  s.first_moment = model.params().zeros_like();
  s.second_moment = model.params().zeros_like();
  return s;
}

StepInfo adamw_step(TinyLM& model, const ParamSet& grads, OptimizerState& state, std::size_t total_steps,
                    const ParamSet* mask) {
  if (state.step >= total_steps) throw ValidationError("optimizer step beyond total_steps");
  auto& params = model.params();
  if (grads.tensors.size() != params.tensors.size()) throw ValidationError("gradient shape mismatch");
  const auto& cfg = state.config;

  StepInfo info;
  info.lr = scheduled_lr(cfg, state.step, total_steps);
  double sq = 0.0;
  for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
    const auto gv = grads.tensors[t].values();
    for (std::size_t i = 0; i < gv.size(); ++i)
      if (mask == nullptr || mask->tensors[t].values()[i] != 0.0) sq += gv[i] * gv[i];
  }
  info.grad_norm = std::sqrt(sq);
  if (!std::isfinite(info.grad_norm)) throw NumericalError("non-finite gradient norm");
  const double clip = info.grad_norm > cfg.clip_norm ? cfg.clip_norm / info.grad_norm : 1.0;
  info.clipped_norm = info.grad_norm * clip;

  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  ParamSet new_params = params;
  ParamSet new_m = state.first_moment;
  ParamSet new_v = state.second_moment;
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto pv = new_params.tensors[k].values();
    auto mv = new_m.tensors[k].values();
    auto vv = new_v.tensors[k].values();
    const auto gv = grads.tensors[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      if (mask != nullptr && mask->tensors[k].values()[i] == 0.0) continue;
      const double g = gv[i] * clip;
      mv[i] = cfg.beta1 * mv[i] + (1.0 - cfg.beta1) * g;
      vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = mv[i] / bc1;
      const double vhat = vv[i] / bc2;
      pv[i] -= info.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * pv[i]);
    }
  }
  if (!new_params.all_finite() || !new_m.all_finite() || !new_v.all_finite())
    throw NumericalError("non-finite parameters after optimizer step " + std::to_string(state.step));
  params = std::move(new_params);
  state.first_moment = std::move(new_m);
  state.second_moment = std::move(new_v);
  ++state.step;
  return info;
}

// ---- evaluation -----------------------------------------------------------

EvalResult evaluate(const TinyLM& model, const Corpus& corpus) {
  if (corpus.size() == 0) throw ValidationError("empty corpus");
  if (corpus.vocab_size != model.config().vocab_size) throw ValidationError("corpus vocabulary does not match model");
  const std::size_t C = model.config().context_len;
  corpus.validate(C);
  const Batch batch = corpus_batch(corpus, C);
  const ForwardTrace trace = forward(model, batch, false);

  EvalResult res;
  res.token_log_probs.resize(corpus.size());
  std::size_t hits = 0;
  double nll = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto lp = trace.log_probs.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == batch.targets[r]) ++hits;
    const double tl = lp[batch.targets[r]];
    nll -= tl;
    res.token_log_probs[batch.groups[r]].push_back(tl);
  }
  const double n = static_cast<double>(batch.size());
  res.accuracy = static_cast<double>(hits) / n;
  res.mean_nll = nll / n;
  res.perplexity = res.mean_nll > 700.0 ? std::numeric_limits<double>::infinity() : std::exp(res.mean_nll);
  return res;
}

// ---- checkpoints ------------------------------------------------------------

namespace {
constexpr std::string_view kCheckpointMagic = "TLMC";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const TinyLM& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.vocab_size));
  w.u32(static_cast<std::uint32_t>(c.context_len));
  w.u32(static_cast<std::uint32_t>(c.embed_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden.size()));
  for (auto h : c.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u64(c.seed);
  w.u64(model.parameter_count());
  for (const auto& t : model.params().tensors)
    for (double v : t.values()) w.f64(v);
  write_file_atomic(path, w.data());
}

TinyLM load_checkpoint(const std::filesystem::path& path) {
  ByteReader r(read_file(path));
  auto need = [&](std::size_t n, const char* what) {
    if (!r.has(n)) throw ValidationError(path.string() + ": truncated checkpoint (" + what + ")");
  };
  need(8, "header");
  if (r.bytes(4) != kCheckpointMagic) throw ValidationError(path.string() + ": bad checkpoint magic");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw ValidationError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  need(16, "config");
  ModelConfig c;
  c.vocab_size = r.u32();
  c.context_len = r.u32();
  c.embed_dim = r.u32();
  const std::uint32_t layers = r.u32();
  if (layers > 1024) throw ValidationError(path.string() + ": implausible hidden layer count");
  need(4ULL * layers + 16, "config");
  c.hidden.clear();
  for (std::uint32_t i = 0; i < layers; ++i) c.hidden.push_back(r.u32());
  c.seed = r.u64();
  const std::uint64_t count = r.u64();
  TinyLM model = TinyLM::zeros(c);
  if (count != model.parameter_count()) throw ValidationError(path.string() + ": parameter count mismatch");
  need(count * 8, "parameters");
  for (auto& t : model.params().tensors)
    for (double& v : t.values()) v = r.f64();
  if (!model.params().all_finite()) throw ValidationError(path.string() + ": non-finite parameters");
  if (r.remaining() != 0) throw ValidationError(path.string() + ": trailing bytes after parameters");
  return model;
}

}  // namespace unlearn_lens
