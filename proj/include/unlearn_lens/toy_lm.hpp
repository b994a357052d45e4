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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "unlearn_lens/linalg.hpp"

namespace unlearn_lens {

using Token = std::uint32_t;

enum class Domain : std::uint8_t { kForget = 0, kRetain = 1, kUnrelated = 2 };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct Corpus {
  std::size_t vocab_size = 0;
  Domain domain = Domain::kForget;
  std::vector<std::vector<Token>> sequences;
  // Generator identity of each sequence; disjoint between corpora.
  std::vector<std::uint32_t> template_ids;

  [[nodiscard]] std::size_t size() const noexcept { return sequences.size(); }
  /// Throws unless every token is in range and every sequence has at least
  /// context_len + 1 tokens.
  void validate(std::size_t context_len) const;
  /// Copy restricted to the given sequence indices (in that order).
  [[nodiscard]] Corpus subset(std::span<const std::size_t> indices) const;
};

struct CorpusSpec {
  std::size_t vocab_size = 64;
  std::size_t context_len = 8;
  std::size_t sequence_length = 24;
  std::size_t forget_count = 20;
  std::size_t retain_count = 128;
  std::size_t unrelated_count = 64;
  // Non-member sequences drawn like the forget set but never trained on.
  std::size_t holdout_count = 128;
  // Top slice of the vocabulary reserved for the unrelated corpus.
  double unrelated_vocab_fraction = 0.25;
  // Zipf exponent of the shared unigram distribution.
  double zipf_exponent = 0.5;
};

struct SyntheticCorpora {
  Corpus forget;
  Corpus retain;
  Corpus unrelated;
  Corpus holdout;
};

/// Builds forget/retain/unrelated (+ held-out non-member) corpora. Every
/// sequence is a fresh template drawn from one unigram distribution over the
/// main vocabulary range; unrelated sequences use the reserved top range.
SyntheticCorpora make_synthetic_corpora(std::uint64_t seed, const CorpusSpec& spec);

/// First token id of the reserved unrelated range.
std::size_t unrelated_range_start(const CorpusSpec& spec);

/// A set of fixed-context windows. Row i predicts targets[i] from
/// contexts[i*context_len .. (i+1)*context_len). Windows taken from the same
/// sequence share a group id (used for sequence-level likelihoods).
struct Batch {
  std::size_t context_len = 0;
  std::vector<Token> contexts;
  std::vector<Token> targets;
  std::vector<std::uint32_t> groups;
  std::size_t group_count = 0;
  // Stable identity of each window within its corpus (sequence << 32 | target position).
  std::vector<std::uint64_t> keys;

  [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
  [[nodiscard]] std::span<const Token> context(std::size_t i) const noexcept {
    return {contexts.data() + i * context_len, context_len};
  }
  /// Concatenation; group ids of `other` are offset past this batch's.
  void append(const Batch& other);
};

struct WindowRef {
  std::uint32_t sequence = 0;
  std::uint32_t target_pos = 0;  // index of the predicted token
};

std::vector<WindowRef> enumerate_windows(const Corpus& corpus, std::size_t context_len);
Batch make_batch(const Corpus& corpus, std::span<const WindowRef> windows, std::size_t context_len);
/// Every window of every sequence, grouped by sequence.
Batch corpus_batch(const Corpus& corpus, std::size_t context_len);

/// Epoch-shuffled window stream; the permutation of epoch e depends only on
/// (seed, e), so a phase can be replayed exactly.
class WindowSampler {
 public:
  WindowSampler(std::vector<WindowRef> windows, std::uint64_t seed);
  std::vector<WindowRef> next(std::size_t count);
  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();
  std::vector<WindowRef> windows_;
  std::vector<WindowRef> order_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t context_len = 8;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> hidden = {64, 64};
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Parameter-shaped collection of tensors; also used for gradients,
/// optimizer moments and masks (as 0/1 values).
struct ParamSet {
  std::vector<Matrix> tensors;

  [[nodiscard]] std::size_t count() const noexcept;
  [[nodiscard]] ParamSet zeros_like() const;
  void add_scaled(const ParamSet& other, double scale);
  void scale(double factor);
  [[nodiscard]] double global_norm() const;
  [[nodiscard]] bool all_finite() const noexcept;
  /// Value of the i-th scalar in declaration order.
  [[nodiscard]] double flat(std::size_t i) const;
  double& flat(std::size_t i);

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

/// Window MLP next-token model:
///   x = concat(embed(t_1..t_C)); a_i = gelu(W_i a_{i-1} + b_i); logits = W_o a_L + b_o.
/// Tensor order: embedding, (W_i, b_i) per hidden layer, W_out, b_out.
class TinyLM {
 public:
  TinyLM() = default;
  /// Seeded random initialization (scaled normal weights, zero biases).
  static TinyLM init(const ModelConfig& config);
  static TinyLM zeros(const ModelConfig& config);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  [[nodiscard]] std::size_t hidden_layers() const noexcept { return config_.hidden.size(); }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.count(); }

  // Tensor indices.
  [[nodiscard]] static constexpr std::size_t embedding_index() noexcept { return 0; }
  [[nodiscard]] static constexpr std::size_t weight_index(std::size_t layer) noexcept { return 1 + 2 * layer; }
  [[nodiscard]] static constexpr std::size_t bias_index(std::size_t layer) noexcept { return 2 + 2 * layer; }
  [[nodiscard]] std::size_t output_weight_index() const noexcept { return 1 + 2 * hidden_layers(); }
  [[nodiscard]] std::size_t output_bias_index() const noexcept { return 2 + 2 * hidden_layers(); }
  [[nodiscard]] std::vector<std::string> tensor_names() const;

  friend bool operator==(const TinyLM&, const TinyLM&) = default;

 private:
  TinyLM(ModelConfig config, ParamSet params) : config_(std::move(config)), params_(std::move(params)) {}
  ModelConfig config_;
  ParamSet params_;
};

double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;

struct ForwardTrace {
  std::vector<Matrix> hidden;  // post-activation, one per hidden layer (capture only)
  Matrix logits;
  Matrix log_probs;
};

ForwardTrace forward(const TinyLM& model, const Batch& batch, bool capture);

struct LossGrads {
  double loss = 0.0;
  ParamSet grads;
};

/// Loss head: given per-window log-probabilities, returns the loss and
/// writes dLoss/dlogits (same shape as log_probs) into `dlogits`.
using LossHead = std::function<double(const Matrix& log_probs, Matrix& dlogits)>;

/// Forward, apply `head`, backpropagate. Throws NumericalError naming the
/// layer when activations or the loss are non-finite.
LossGrads loss_with_head(const TinyLM& model, const Batch& batch, const LossHead& head);

/// Mean next-token cross-entropy over the batch windows.
LossGrads loss_and_grads(const TinyLM& model, const Batch& batch);

struct AdamWConfig {
  double peak_lr = 1e-3;
  double warmup_fraction = 0.1;
  double floor_fraction = 0.1;
  double weight_decay = 0.1;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
};

/// Linear warmup to the peak over the first warmup_fraction of steps, then
/// cosine decay to floor_fraction * peak at step == total_steps.
double scheduled_lr(const AdamWConfig& config, std::size_t step, std::size_t total_steps);

struct OptimizerState {
  AdamWConfig config;
  ParamSet first_moment;
  ParamSet second_moment;
  std::size_t step = 0;

  static OptimizerState for_model(const TinyLM& model, const AdamWConfig& config);
};

struct StepInfo {
  double lr = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

/// One AdamW update with global-norm clipping and decoupled weight decay.
/// With a mask, entries whose mask value is zero are left untouched
/// (no gradient, no moment update, no decay). On a non-finite result the
/// model and state are left unchanged and NumericalError is thrown.
StepInfo adamw_step(TinyLM& model, const ParamSet& grads, OptimizerState& state, std::size_t total_steps,
                    const ParamSet* mask = nullptr);

struct EvalResult {
  double accuracy = 0.0;
  double mean_nll = 0.0;
  double perplexity = 0.0;  // +inf when mean_nll > 700
  std::vector<std::vector<double>> token_log_probs;  // per sequence
};

EvalResult evaluate(const TinyLM& model, const Corpus& corpus);

/// TLMC checkpoint I/O (little-endian, float64 parameters, atomic write).
void save_checkpoint(const TinyLM& model, const std::filesystem::path& path);
TinyLM load_checkpoint(const std::filesystem::path& path);
/// Builds a model from explicit parameters; shapes must match the config.
TinyLM model_from_params(const ModelConfig& config, ParamSet params);

}  // namespace unlearn_lens
