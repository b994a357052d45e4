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

#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "unlearn_lens/binary_io.hpp"
#include "unlearn_lens/config.hpp"
#include "unlearn_lens/dump.hpp"
#include "unlearn_lens/report.hpp"

namespace unlearn_lens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Thrown for usage errors detected after parsing (missing option combos).
struct UsageError : ValidationError {
  using ValidationError::ValidationError;
};

void print_error(std::ostream& err, const std::string& kind, const std::string& message,
                 const std::optional<std::string>& code = std::nullopt) {
  err << "error: " << message << "\n";
  json j = {{"error", {{"kind", kind}, {"message", message}}}};
  if (code) j["error"]["code"] = *code;
  err << j.dump() << "\n";
}

ExperimentConfig config_from_options(const std::string& config_path, const std::string& preset_name,
                                     const std::vector<std::uint64_t>& seeds) {
  if (!config_path.empty() && !preset_name.empty()) throw UsageError("give either --config or --preset, not both");
  ExperimentConfig c;
  if (!config_path.empty())
    c = load_config(config_path);
  else if (!preset_name.empty())
    c = preset(preset_name);
  else
    throw UsageError("one of --config or --preset is required");
  if (!seeds.empty()) c.seeds = seeds;
  c.validate();
  return c;
}

const TinyLM& phase_model(const ForgettingRun& run, const std::string& phase) {
  if (phase == "theta0") return run.theta0;
  if (phase == "theta_u") {
    if (run.requests.empty()) throw ValidationError("phase theta_u has no checkpoint; run unlearn first");
    return run.theta_u;
  }
  if (phase.starts_with("theta_r_")) {
    const auto it = run.theta_r.find(phase.substr(8));
    if (it == run.theta_r.end()) throw ValidationError("phase " + phase + " has no checkpoint; run relearn first");
    return it->second;
  }
  for (std::size_t t = 0; t < run.requests.size(); ++t)
    if (phase == request_phase(t)) return run.requests[t];
  throw ValidationError("unknown phase '" + phase + "'");
}

std::uint64_t pick_seed(const ExperimentConfig& c, std::optional<std::uint64_t> seed) {
  if (!seed) return c.seeds.front();
  for (auto s : c.seeds)
    if (s == *seed) return s;
  throw ValidationError("seed " + std::to_string(*seed) + " is not part of this run");
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void print_metrics(std::ostream& out, const ForgettingRun& run) {
  for (const auto& m : run.metrics) {
    out << "seed=" << run.seed << " phase=" << m.phase << " corpus=" << m.corpus << " acc=" << pct(100.0 * m.accuracy)
        << " ppl=" << format_real(m.perplexity);
    if (m.mia_auc) out << " mia_auc=" << pct(*m.mia_auc);
    out << "\n";
  }
}

json layers_json(const StateComparison& cmp) {
  json layers = json::array();
  for (const auto& l : cmp.layers) {
    layers.push_back({{"layer", l.layer},
                      {"pca_similarity", l.pca_similarity},
                      {"pca_similarity_abs", l.pca_similarity_abs},
                      {"shift_pc1", l.shift_pc1},
                      {"shift_pc2", l.shift_pc2},
                      {"cka", l.cka},
                      {"eigengap", l.eigengap},
                      {"degenerate_gap", l.degenerate_gap},
                      {"fisher_mean", nullptr}});
  }
  return layers;
}

// metrics.csv -> per-seed accuracy rows, enough to rebuild a verdict.
std::map<std::uint64_t, std::vector<PhaseMetrics>> read_accuracy_rows(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("missing " + path.string() + "; run report first");
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "phase,method,lr,N,corpus,metric,value,seed") throw ValidationError(path.string() + ": bad header");
  std::map<std::uint64_t, std::vector<PhaseMetrics>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw ValidationError(path.string() + ": malformed row '" + line + "'");
    if (cells[5] != "accuracy") continue;
    PhaseMetrics m;
    m.phase = cells[0];
    m.corpus = cells[4];
    m.accuracy = std::stod(cells[6]);
    rows[std::stoull(cells[7])].push_back(m);
  }
  return rows;
}

struct Loaded {
  ExperimentConfig config;
  std::vector<ForgettingRun> runs;
  std::vector<SyntheticCorpora> corpora;
};

Loaded load_run(const fs::path& dir) {
  Loaded l;
  l.config = read_run_config(dir);
  for (auto seed : l.config.seeds) {
    l.runs.push_back(load_run_states(dir, l.config, seed));
    l.corpora.push_back(make_synthetic_corpora(seed, l.config.corpus));
  }
  return l;
}

void add_threshold_options(CLI::App* cmd, RegimeThresholds& t) {
  cmd->add_option("--catastrophic-drop", t.catastrophic_drop, "unlearning drop (pts) counted as large");
  cmd->add_option("--irreversible-residual", t.irreversible_residual, "relearn residual (pts) counted as large");
  cmd->add_option("--near-zero-band", t.near_zero_band, "relearn residual (pts) counted as recovered");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"unlearn-lens: machine-unlearning reversibility lab on a toy language model", "unlearn-lens"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  std::string config_path;
  std::string preset_name;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  std::string phase = "theta_u";

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--preset", preset_name, "named preset")->check(CLI::IsMember(preset_names()));
    cmd->add_option("--seeds", seeds, "override the config seeds")->delimiter(',');
  };

  auto* train = app.add_subcommand("train", "train theta0 for every seed into a new run directory");
  add_config(train);
  train->add_option("--out", out_dir, "run directory")->required();

  auto* unlearn = app.add_subcommand("unlearn", "unlearn D_f from theta0 (all requests)");
  unlearn->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* relearn = app.add_subcommand("relearn", "relearn from theta_u on every configured source");
  relearn->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* report = app.add_subcommand("report", "write metrics.csv, diagnostics.json and plots/ from checkpoints");
  report->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* pipeline = app.add_subcommand("run", "train, unlearn, relearn and report in one go");
  add_config(pipeline);
  pipeline->add_option("--out", out_dir, "run directory")->required();

  std::string orig_path;
  std::string upd_path;
  std::string diag_out;
  auto* diagnose = app.add_subcommand("diagnose", "representation diagnostics for a run or a pair of ULNS dumps");
  diagnose->add_option("--run", run_dir, "run directory (internal model)")->check(CLI::ExistingDirectory);
  auto* orig_opt = diagnose->add_option("--orig", orig_path, "original-state dump")->check(CLI::ExistingFile);
  auto* upd_opt = diagnose->add_option("--upd", upd_path, "updated-state dump")->check(CLI::ExistingFile);
  orig_opt->needs(upd_opt);
  upd_opt->needs(orig_opt);
  diagnose->add_option("--out", diag_out, "write the dump comparison JSON here instead of stdout");

  RegimeThresholds thresholds;
  bool thresholds_given = false;
  std::vector<double> forget_acc;
  std::vector<double> retain_acc;
  auto* classify_cmd = app.add_subcommand("classify", "regime verdict; the last output line is the verdict");
  classify_cmd->add_option("--run", run_dir, "run directory with metrics.csv")->check(CLI::ExistingDirectory);
  classify_cmd->add_option("--forget", forget_acc, "forget accuracy (pts) at theta0,theta_u,theta_r")
      ->delimiter(',')
      ->expected(3);
  classify_cmd->add_option("--retain", retain_acc, "retain accuracy (pts) at theta0,theta_u,theta_r")
      ->delimiter(',')
      ->expected(3);
  add_threshold_options(classify_cmd, thresholds);

  std::vector<double> scales;
  std::vector<std::size_t> probe_layers;
  std::uint64_t probe_seed = 0;
  std::string probe_source = "forget";
  std::string probe_out;
  auto* probe = app.add_subcommand("probe", "controlled weight-perturbation sweep on one stored state");
  probe->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  probe->add_option("--phase", phase, "state to perturb")->capture_default_str();
  probe->add_option("--seed", seed, "run seed (default: first)");
  probe->add_option("--scales", scales, "total Frobenius norms")->delimiter(',')->required();
  probe->add_option("--layers", probe_layers, "hidden layers to perturb (default: all)")->delimiter(',');
  probe->add_option("--perturb-seed", probe_seed, "perturbation seed")->capture_default_str();
  probe->add_option("--probe", probe_source, "probe corpus")->check(CLI::IsMember({"forget", "retain", "unrelated"}));
  probe->add_option("--out", probe_out, "CSV output (default: stdout)");

  std::string dump_out;
  std::string dump_label;
  auto* dump = app.add_subcommand("dump", "write hidden activations of one stored state as a ULNS dump");
  dump->add_option("--run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  dump->add_option("--phase", phase, "state to capture")->capture_default_str();
  dump->add_option("--seed", seed, "run seed (default: first)");
  dump->add_option("--probe", probe_source, "probe corpus")->check(CLI::IsMember({"forget", "retain", "unrelated"}));
  dump->add_option("--label", dump_label, "model label (default: <phase>)");
  dump->add_option("--out", dump_out, "output .ulns")->required();

  std::vector<const char*> argv;
  argv.push_back("unlearn-lens");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "validation", e.what());
    return 1;
  }
  thresholds_given = classify_cmd->count("--catastrophic-drop") + classify_cmd->count("--irreversible-residual") +
                         classify_cmd->count("--near-zero-band") >
                     0;

  try {
    if (train->parsed()) {
      const ExperimentConfig c = config_from_options(config_path, preset_name, seeds);
      write_config(out_dir, c);
      for (auto s : c.seeds) {
        const SyntheticCorpora corpora = make_synthetic_corpora(s, c.corpus);
        ForgettingRun r;
        r.seed = s;
        r.theta0 = train_base(c, corpora, s);
        save_run_states(out_dir, c, r);
        out << "seed=" << s << " theta0 trained: retain acc=" << pct(100.0 * evaluate(r.theta0, corpora.retain).accuracy)
            << "\n";
      }
    } else if (unlearn->parsed()) {
      Loaded l = load_run(run_dir);
      for (std::size_t i = 0; i < l.runs.size(); ++i) {
        ForgettingRun& r = l.runs[i];
        r.theta_r.clear();
        unlearn_phase(l.config, l.corpora[i], r);
        save_run_states(run_dir, l.config, r);
        out << "seed=" << r.seed << " unlearned " << r.requests.size() << " request(s): forget acc="
            << pct(100.0 * evaluate(r.theta_u, l.corpora[i].forget).accuracy) << "\n";
      }
    } else if (relearn->parsed()) {
      Loaded l = load_run(run_dir);
      for (std::size_t i = 0; i < l.runs.size(); ++i) {
        ForgettingRun& r = l.runs[i];
        phase_model(r, "theta_u");
        relearn_phase(l.config, l.corpora[i], r);
        save_run_states(run_dir, l.config, r);
        for (const auto& [src, m] : r.theta_r)
          out << "seed=" << r.seed << " relearned on " << src
              << ": forget acc=" << pct(100.0 * evaluate(m, l.corpora[i].forget).accuracy) << "\n";
      }
    } else if (report->parsed()) {
      Loaded l = load_run(run_dir);
      for (std::size_t i = 0; i < l.runs.size(); ++i) finalize_run(l.config, l.corpora[i], l.runs[i]);
      write_reports(run_dir, l.config, l.runs);
      for (const auto& r : l.runs) {
        print_metrics(out, r);
        if (!r.theta_r.empty()) out << "seed=" << r.seed << " " << r.verdict.line() << "\n";
      }
    } else if (pipeline->parsed()) {
      const ExperimentConfig c = config_from_options(config_path, preset_name, seeds);
      write_config(out_dir, c);
      std::vector<ForgettingRun> runs;
      for (auto s : c.seeds) {
        runs.push_back(run_pipeline(c, s));
        save_run_states(out_dir, c, runs.back());
      }
      write_reports(out_dir, c, runs);
      for (const auto& r : runs) {
        print_metrics(out, r);
        out << "seed=" << r.seed << " " << r.verdict.line() << "\n";
      }
    } else if (diagnose->parsed()) {
      if (!orig_path.empty()) {
        if (!run_dir.empty()) throw UsageError("give either --run or --orig/--upd, not both");
        const ActivationDump a = read_dump(orig_path);
        const ActivationDump b = read_dump(upd_path);
        if (a.layers.size() != b.layers.size())
          throw ValidationError("dumps differ in layer count (" + std::to_string(a.layers.size()) + " vs " +
                                std::to_string(b.layers.size()) + ")");
        for (std::size_t i = 0; i < a.layers.size(); ++i)
          if (a.layers[i].rows != b.layers[i].rows)
            throw ValidationError("dumps differ in probe rows at layer " + std::to_string(a.layers[i].index));
        const StateComparison cmp = compare_activations(a.matrices(), b.matrices());
        json j = {{"orig", a.label},
                  {"upd", b.label},
                  {"probe_source", to_string(a.source)},
                  {"layers", layers_json(cmp)},
                  {"mean_pca_distance", cmp.mean_pca_distance}};
        if (diag_out.empty())
          out << j.dump(2) << "\n";
        else
          write_file_atomic(diag_out, j.dump(2) + "\n");
      } else {
        if (run_dir.empty()) throw UsageError("diagnose needs --run or --orig/--upd");
        Loaded l = load_run(run_dir);
        for (std::size_t i = 0; i < l.runs.size(); ++i) finalize_run(l.config, l.corpora[i], l.runs[i]);
        write_file_atomic(fs::path(run_dir) / "diagnostics.json", diagnostics_json(l.config, l.runs).dump(2) + "\n");
        for (const auto& r : l.runs)
          for (const auto& [ph, d] : r.mean_pca_distance)
            out << "seed=" << r.seed << " phase=" << ph << " mean_pca_distance=" << format_real(d) << "\n";
      }
    } else if (classify_cmd->parsed()) {
      if (!run_dir.empty()) {
        if (!forget_acc.empty() || !retain_acc.empty()) throw UsageError("give either --run or --forget/--retain");
        const ExperimentConfig c = read_run_config(run_dir);
        const RegimeThresholds t = thresholds_given ? thresholds : c.thresholds;
        const auto rows = read_accuracy_rows(fs::path(run_dir) / "metrics.csv");
        const std::string src = [&] {
          for (auto s : c.relearn.sources)
            if (s == RelearnSource::kForget) return to_string(s);
          return to_string(c.relearn.sources.front());
        }();
        // Per-seed verdicts, then the verdict on seed-averaged accuracies.
        std::map<std::pair<std::string, std::string>, double> sums;
        for (const auto& [s, metrics] : rows) {
          out << "seed=" << s << " " << verdict_from_metrics(metrics, "theta_r_" + src, t).line() << "\n";
          for (const auto& m : metrics) sums[{m.phase, m.corpus}] += m.accuracy;
        }
        if (rows.empty()) throw ValidationError("metrics.csv has no accuracy rows");
        std::vector<PhaseMetrics> mean;
        for (const auto& [key, sum] : sums) {
          PhaseMetrics m;
          m.phase = key.first;
          m.corpus = key.second;
          m.accuracy = sum / static_cast<double>(rows.size());
          mean.push_back(m);
        }
        out << verdict_from_metrics(mean, "theta_r_" + src, t).line() << "\n";
      } else {
        if (forget_acc.size() != 3 || retain_acc.size() != 3)
          throw UsageError("classify needs --run, or both --forget and --retain with three values each");
        const RegimeVerdict v = classify(compute_deltas({forget_acc[0], forget_acc[1], forget_acc[2]}),
                                         compute_deltas({retain_acc[0], retain_acc[1], retain_acc[2]}), thresholds);
        out << v.line() << "\n";
      }
    } else if (probe->parsed()) {
      Loaded l = load_run(run_dir);
      const std::uint64_t s = pick_seed(l.config, seed);
      const std::size_t i = static_cast<std::size_t>(
          std::find(l.config.seeds.begin(), l.config.seeds.end(), s) - l.config.seeds.begin());
      const TinyLM& model = phase_model(l.runs[i], phase);
      const Domain d = domain_from_string(probe_source);
      const Corpus& corpus = d == Domain::kForget   ? l.corpora[i].forget
                             : d == Domain::kRetain ? l.corpora[i].retain
                                                    : l.corpora[i].unrelated;
      PerturbationConfig pc;
      pc.scales = scales;
      pc.layers = probe_layers;
      pc.seed = probe_seed;
      const PerturbationReport rep =
          perturbation_probe(model, make_probe_set(corpus, l.config.corpus.context_len, l.config.probe_count), pc);
      std::string csv =
          "scale,perturbation_norm,one_minus_similarity,mean_pca_distance,one_minus_cka,gram_change,delta_fisher_mean\n";
      for (const auto& p : rep.points) {
        for (double v : {p.scale, p.perturbation_norm, p.one_minus_similarity, p.mean_pca_distance, p.one_minus_cka,
                         p.gram_change})
          csv += format_real(v) + ",";
        csv += format_real(p.delta_fisher_mean) + "\n";
      }
      if (probe_out.empty())
        out << csv;
      else
        write_file_atomic(probe_out, csv);
    } else if (dump->parsed()) {
      Loaded l = load_run(run_dir);
      const std::uint64_t s = pick_seed(l.config, seed);
      const std::size_t i = static_cast<std::size_t>(
          std::find(l.config.seeds.begin(), l.config.seeds.end(), s) - l.config.seeds.begin());
      const TinyLM& model = phase_model(l.runs[i], phase);
      const Domain d = domain_from_string(probe_source);
      const Corpus& corpus = d == Domain::kForget   ? l.corpora[i].forget
                             : d == Domain::kRetain ? l.corpora[i].retain
                                                    : l.corpora[i].unrelated;
      const ProbeSet ps = make_probe_set(corpus, l.config.corpus.context_len, l.config.probe_count);
      write_dump(make_dump(dump_label.empty() ? phase : dump_label, d, capture_activations(model, ps)), dump_out);
      out << "wrote " << dump_out << " (" << model.hidden_layers() << " layers, " << ps.count() << " rows)\n";
    }
  } catch (const DumpError& e) {
    print_error(err, "validation", e.what(), to_string(e.code()));
    return 1;
  } catch (const Error& e) {
    const bool numerical = e.kind() == ErrorKind::kNumerical;
    print_error(err, numerical ? "numerical" : "validation", e.what());
    return numerical ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    print_error(err, "validation", e.what());
    return 1;
  }
  return 0;
}

}  // namespace unlearn_lens::cli
