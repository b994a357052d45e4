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

#include "unlearn_lens/config.hpp"

#include <set>

#include "unlearn_lens/binary_io.hpp"
#include "unlearn_lens/error.hpp"

namespace unlearn_lens {

using nlohmann::json;

namespace {

// Walks one JSON object, tracking which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ValidationError("config field '" + path + "': " + msg);
  }

  [[nodiscard]] std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[nodiscard]] const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void count(const std::string& key, std::size_t& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
        fail(at(key), "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
        fail(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const std::string& key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) fail(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) fail(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  template <typename Parse>
  void text(const std::string& key, Parse parse) {
    if (const json* v = get(key)) {
      if (!v->is_string()) fail(at(key), "expected a string");
      try {
        parse(v->get<std::string>());
      } catch (const ValidationError& e) {
        fail(at(key), e.what());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) fail(at(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void section(Fields& parent, const std::string& key, Fn fn) {
  if (const json* v = parent.get(key)) {
    Fields f(*v, parent.at(key));
    fn(f);
    f.finish();
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  Fields root(j, "");
  ExperimentConfig c;
  root.text("preset", [&](const std::string& s) { c = preset(s); });
  root.text("name", [&](const std::string& s) { c.name = s; });
  if (const json* v = root.get("seeds")) {
    if (!v->is_array() || v->empty()) Fields::fail("seeds", "expected a non-empty array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<long long>() >= 0))
        Fields::fail("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      c.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  section(root, "corpus", [&](Fields& f) {
    f.count("vocab_size", c.corpus.vocab_size);
    f.count("context_len", c.corpus.context_len);
    f.count("sequence_length", c.corpus.sequence_length);
    f.count("forget_count", c.corpus.forget_count);
    f.count("retain_count", c.corpus.retain_count);
    f.count("unrelated_count", c.corpus.unrelated_count);
    f.count("holdout_count", c.corpus.holdout_count);
    f.real("unrelated_vocab_fraction", c.corpus.unrelated_vocab_fraction);
    f.real("zipf_exponent", c.corpus.zipf_exponent);
  });
  section(root, "model", [&](Fields& f) {
    f.count("embed_dim", c.model.embed_dim);
    if (const json* v = f.get("hidden")) {
      if (!v->is_array() || v->empty()) Fields::fail(f.at("hidden"), "expected a non-empty array of widths");
      c.model.hidden.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) Fields::fail(f.at("hidden"), "expected non-negative integers");
        c.model.hidden.push_back(e.get<std::size_t>());
      }
    }
  });
  section(root, "train", [&](Fields& f) {
    f.count("steps", c.train.steps);
    f.count("batch_size", c.train.batch_size);
    f.real("peak_lr", c.train.adam.peak_lr);
    f.real("warmup_fraction", c.train.adam.warmup_fraction);
    f.real("floor_fraction", c.train.adam.floor_fraction);
    f.real("weight_decay", c.train.adam.weight_decay);
    f.real("clip_norm", c.train.adam.clip_norm);
    f.real("beta1", c.train.adam.beta1);
    f.real("beta2", c.train.adam.beta2);
    f.real("eps", c.train.adam.eps);
    f.real("retain_floor", c.train.retain_floor);
  });
  section(root, "unlearn", [&](Fields& f) {
    auto& u = c.unlearn;
    f.text("method", [&](const std::string& s) { u.loss.method = method_from_string(s); });
    f.real("lambda", u.loss.lambda);
    f.real("beta", u.loss.beta);
    f.real("mask_fraction", u.loss.mask_fraction);
    f.text("kl_direction", [&](const std::string& s) { u.loss.kl_direction = kl_direction_from_string(s); });
    f.text("npo_granularity", [&](const std::string& s) { u.loss.npo_granularity = granularity_from_string(s); });
    f.real("peak_lr", u.peak_lr);
    f.count("n_requests", u.n_requests);
    f.count("steps_per_request", u.steps_per_request);
    f.count("batch_size", u.batch_size);
    f.boolean("shuffle_requests", u.shuffle_requests);
  });
  section(root, "relearn", [&](Fields& f) {
    auto& r = c.relearn;
    if (const json* v = f.get("sources")) {
      if (!v->is_array() || v->empty()) Fields::fail(f.at("sources"), "expected a non-empty array of source names");
      r.sources.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const std::string path = f.at("sources") + "[" + std::to_string(i) + "]";
        if (!(*v)[i].is_string()) Fields::fail(path, "expected a string");
        try {
          r.sources.push_back(relearn_source_from_string((*v)[i].get<std::string>()));
        } catch (const ValidationError& e) {
          Fields::fail(path, e.what());
        }
      }
    }
    f.count("budget", r.budget);
    f.count("steps", r.steps);
    f.real("peak_lr", r.peak_lr);
    f.count("batch_size", r.batch_size);
  });
  section(root, "thresholds", [&](Fields& f) {
    f.real("catastrophic_drop", c.thresholds.catastrophic_drop);
    f.real("irreversible_residual", c.thresholds.irreversible_residual);
    f.real("near_zero_band", c.thresholds.near_zero_band);
  });
  root.count("probe_count", c.probe_count);
  root.real("mia_k", c.mia_k);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
  json sources = json::array();
  for (auto s : c.relearn.sources) sources.push_back(to_string(s));
  return json{
      {"name", c.name},
      {"seeds", c.seeds},
      {"corpus",
       {{"vocab_size", c.corpus.vocab_size},
        {"context_len", c.corpus.context_len},
        {"sequence_length", c.corpus.sequence_length},
        {"forget_count", c.corpus.forget_count},
        {"retain_count", c.corpus.retain_count},
        {"unrelated_count", c.corpus.unrelated_count},
        {"holdout_count", c.corpus.holdout_count},
        {"unrelated_vocab_fraction", c.corpus.unrelated_vocab_fraction},
        {"zipf_exponent", c.corpus.zipf_exponent}}},
      {"model", {{"embed_dim", c.model.embed_dim}, {"hidden", c.model.hidden}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"peak_lr", c.train.adam.peak_lr},
        {"warmup_fraction", c.train.adam.warmup_fraction},
        {"floor_fraction", c.train.adam.floor_fraction},
        {"weight_decay", c.train.adam.weight_decay},
        {"clip_norm", c.train.adam.clip_norm},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"eps", c.train.adam.eps},
        {"retain_floor", c.train.retain_floor}}},
      {"unlearn",
       {{"method", to_string(c.unlearn.loss.method)},
        {"lambda", c.unlearn.loss.lambda},
        {"beta", c.unlearn.loss.beta},
        {"mask_fraction", c.unlearn.loss.mask_fraction},
        {"kl_direction", to_string(c.unlearn.loss.kl_direction)},
        {"npo_granularity", to_string(c.unlearn.loss.npo_granularity)},
        {"peak_lr", c.unlearn.peak_lr},
        {"n_requests", c.unlearn.n_requests},
        {"steps_per_request", c.unlearn.steps_per_request},
        {"batch_size", c.unlearn.batch_size},
        {"shuffle_requests", c.unlearn.shuffle_requests}}},
      {"relearn",
       {{"sources", sources},
        {"budget", c.relearn.budget},
        {"steps", c.relearn.steps},
        {"peak_lr", c.relearn.peak_lr},
        {"batch_size", c.relearn.batch_size}}},
      {"thresholds",
       {{"catastrophic_drop", c.thresholds.catastrophic_drop},
        {"irreversible_residual", c.thresholds.irreversible_residual},
        {"near_zero_band", c.thresholds.near_zero_band}}},
      {"probe_count", c.probe_count},
      {"mia_k", c.mia_k},
  };
}

}  // namespace unlearn_lens
