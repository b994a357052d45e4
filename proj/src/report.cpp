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

#include "unlearn_lens/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "unlearn_lens/binary_io.hpp"
#include "unlearn_lens/config.hpp"

namespace unlearn_lens {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

json jnum(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + '\n';
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string metrics_csv(const ExperimentConfig& config, const std::vector<ForgettingRun>& runs) {
  std::string out = "phase,method,lr,N,corpus,metric,value,seed\n";
  const std::string method = to_string(config.unlearn.loss.method);
  const std::string lr = format_real(config.unlearn.peak_lr);
  const std::string n = std::to_string(config.unlearn.n_requests);
  for (const auto& run : runs) {
    const std::string seed = std::to_string(run.seed);
    for (const auto& m : run.metrics) {
      auto row = [&](const char* metric, double v) {
        out += join({m.phase, method, lr, n, m.corpus, metric, format_real(v), seed});
      };
      row("accuracy", m.accuracy);
      row("perplexity", m.perplexity);
      row("mean_nll", m.mean_nll);
      if (m.mia_auc) row("mia_auc", *m.mia_auc);
    }
  }
  return out;
}

json diagnostics_json(const ExperimentConfig& config, const std::vector<ForgettingRun>& runs) {
  json records = json::array();
  json run_level = json::array();
  std::map<std::string, std::vector<double>> distances;
  std::vector<double> mia;
  std::map<std::string, int> labels;

  for (const auto& run : runs) {
    for (const auto& d : run.diagnostics) {
      for (const auto& l : d.comparison.layers) {
        records.push_back({{"seed", run.seed},
                           {"phase", d.phase},
                           {"probe_source", to_string(d.probe_source)},
                           {"layer", l.layer},
                           {"pca_similarity", jnum(l.pca_similarity)},
                           {"pca_similarity_abs", jnum(l.pca_similarity_abs)},
                           {"shift_pc1", jnum(l.shift_pc1)},
                           {"shift_pc2", jnum(l.shift_pc2)},
                           {"cka", jnum(l.cka)},
                           {"eigengap", jnum(l.eigengap)},
                           {"degenerate_gap", l.degenerate_gap},
                           {"fisher_mean", l.fisher_mean ? jnum(*l.fisher_mean) : json(nullptr)}});
      }
    }
    json r = {{"seed", run.seed},
              {"mia_auc", jnum(run.mia_auc_theta0)},
              {"k_fraction", config.mia_k},
              {"npo_clamped", run.npo_clamped}};
    json dist = json::object();
    for (const auto& [phase, v] : run.mean_pca_distance) {
      dist[phase] = jnum(v);
      distances[phase].push_back(v);
    }
    r["mean_pca_distance"] = dist;
    json fisher = json::object();
    fisher["theta0"] = jnum(run.theta0_fisher.mean);
    for (const auto& d : run.diagnostics)
      if (d.probe_source == Domain::kForget) fisher[d.phase] = jnum(d.fisher.mean);
    r["fisher_mean"] = fisher;
    mia.push_back(run.mia_auc_theta0);
    if (!run.theta_r.empty()) {
      const auto& v = run.verdict;
      r["verdict"] = {{"label", v.label()},
                      {"reversibility", to_string(v.reversibility)},
                      {"catastrophicity", to_string(v.catastrophicity)},
                      {"dU_f", jnum(v.du_forget)},
                      {"dU_r", jnum(v.du_retain)},
                      {"dR_f", jnum(v.dr_forget)},
                      {"dR_r", jnum(v.dr_retain)},
                      {"line", v.line()}};
      ++labels[v.label()];
    }
    run_level.push_back(std::move(r));
  }

  json summary = json::object();
  json dist = json::object();
  for (const auto& [phase, values] : distances) {
    const MeanStd ms = mean_std(values);
    dist[phase] = {{"mean", jnum(ms.mean)}, {"std", jnum(ms.std)}, {"n", values.size()}};
  }
  summary["mean_pca_distance"] = dist;
  const MeanStd ms = mean_std(mia);
  summary["mia_auc"] = {{"mean", jnum(ms.mean)}, {"std", jnum(ms.std)}, {"n", mia.size()}};
  summary["verdicts"] = labels;

  return {{"config", config_to_json(config)},
          {"thresholds",
           {{"catastrophic_drop", config.thresholds.catastrophic_drop},
            {"irreversible_residual", config.thresholds.irreversible_residual},
            {"near_zero_band", config.thresholds.near_zero_band}}},
          {"records", records},
          {"runs", run_level},
          {"summary", summary}};
}

std::map<std::string, std::string> plot_csvs(const std::vector<ForgettingRun>& runs) {
  std::string sim = "seed,phase,probe_source,layer,pca_similarity,pca_similarity_abs\n";
  std::string shift = "seed,phase,probe_source,layer,shift_pc1,shift_pc2\n";
  std::string cka = "seed,phase,probe_source,layer,cka\n";
  std::string fisher = "seed,phase,tensor_group,bin,log10_center,count\n";
  auto hist_rows = [&](const std::string& seed, const std::string& phase, const FisherSummary& f) {
    for (const auto& layer : f.layers)
      for (std::size_t b = 0; b < FisherHistogram::kBins; ++b)
        fisher += join({seed, phase, layer.name, std::to_string(b),
                        format_real(FisherHistogram::bin_center_log10(b)),
                        std::to_string(layer.histogram.counts[b])});
  };
  for (const auto& run : runs) {
    const std::string seed = std::to_string(run.seed);
    hist_rows(seed, "theta0", run.theta0_fisher);
    for (const auto& d : run.diagnostics) {
      const std::string src = to_string(d.probe_source);
      for (const auto& l : d.comparison.layers) {
        const std::string layer = std::to_string(l.layer);
        sim += join({seed, d.phase, src, layer, format_real(l.pca_similarity), format_real(l.pca_similarity_abs)});
        shift += join({seed, d.phase, src, layer, format_real(l.shift_pc1), format_real(l.shift_pc2)});
        cka += join({seed, d.phase, src, layer, format_real(l.cka)});
      }
      if (d.probe_source == Domain::kForget) hist_rows(seed, d.phase, d.fisher);
    }
  }
  return {{"similarity_vs_layer.csv", sim},
          {"shift_scatter.csv", shift},
          {"cka_vs_layer.csv", cka},
          {"fisher_histogram.csv", fisher}};
}

// ---- run directory ------------------------------------------------------------

fs::path checkpoint_dir(const fs::path& run_dir, const ExperimentConfig& config, std::uint64_t seed) {
  fs::path dir = run_dir / "checkpoints";
  if (config.seeds.size() > 1) dir /= "seed_" + std::to_string(seed);
  return dir;
}

void save_run_states(const fs::path& run_dir, const ExperimentConfig& config, const ForgettingRun& run) {
  const fs::path dir = checkpoint_dir(run_dir, config, run.seed);
  fs::create_directories(dir);
  save_checkpoint(run.theta0, dir / "theta0.tlmc");
  if (run.requests.size() > 1) {
    fs::create_directories(dir / "requests");
    for (std::size_t t = 0; t < run.requests.size(); ++t)
      save_checkpoint(run.requests[t], dir / "requests" / (request_phase(t) + ".tlmc"));
  }
  if (!run.requests.empty()) {
    save_checkpoint(run.theta_u, dir / "theta_u.tlmc");
    const json state = {{"npo_clamped", run.npo_clamped}, {"partition", run.partition}};
    write_file_atomic(dir / "unlearn.json", state.dump(2) + "\n");
  }
  for (const auto& [src, m] : run.theta_r) save_checkpoint(m, dir / ("theta_r_" + src + ".tlmc"));
}

ForgettingRun load_run_states(const fs::path& run_dir, const ExperimentConfig& config, std::uint64_t seed) {
  const fs::path dir = checkpoint_dir(run_dir, config, seed);
  if (!fs::exists(dir / "theta0.tlmc")) throw ValidationError("missing checkpoint " + (dir / "theta0.tlmc").string());
  ForgettingRun run;
  run.seed = seed;
  run.theta0 = load_checkpoint(dir / "theta0.tlmc");
  if (fs::exists(dir / "theta_u.tlmc")) {
    run.theta_u = load_checkpoint(dir / "theta_u.tlmc");
    if (config.unlearn.n_requests > 1) {
      for (std::size_t t = 0; t < config.unlearn.n_requests; ++t) {
        const fs::path p = dir / "requests" / (request_phase(t) + ".tlmc");
        if (!fs::exists(p)) throw ValidationError("missing checkpoint " + p.string());
        run.requests.push_back(load_checkpoint(p));
      }
    } else {
      run.requests.push_back(run.theta_u);
    }
    if (fs::exists(dir / "unlearn.json")) {
      try {
        const json state = json::parse(read_file(dir / "unlearn.json"));
        run.npo_clamped = state.at("npo_clamped").get<std::size_t>();
        run.partition = state.at("partition").get<std::vector<std::vector<std::size_t>>>();
      } catch (const json::exception& e) {
        throw ValidationError((dir / "unlearn.json").string() + ": " + e.what());
      }
    }
  }
  for (RelearnSource src : config.relearn.sources) {
    const fs::path p = dir / ("theta_r_" + to_string(src) + ".tlmc");
    if (fs::exists(p)) run.theta_r.emplace(to_string(src), load_checkpoint(p));
  }
  return run;
}

void write_config(const fs::path& run_dir, const ExperimentConfig& config) {
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / "config.json", config_to_json(config).dump(2) + "\n");
}

ExperimentConfig read_run_config(const fs::path& run_dir) {
  const fs::path p = run_dir / "config.json";
  if (!fs::exists(p)) throw ValidationError("not a run directory (no config.json): " + run_dir.string());
  return load_config(p);
}

void write_reports(const fs::path& run_dir, const ExperimentConfig& config, const std::vector<ForgettingRun>& runs) {
  fs::create_directories(run_dir / "plots");
  write_file_atomic(run_dir / "metrics.csv", metrics_csv(config, runs));
  write_file_atomic(run_dir / "diagnostics.json", diagnostics_json(config, runs).dump(2) + "\n");
  for (const auto& [name, text] : plot_csvs(runs)) write_file_atomic(run_dir / "plots" / name, text);
}

}  // namespace unlearn_lens
