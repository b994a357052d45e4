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

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "unlearn_lens/binary_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = unlearn_lens::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp_dir() {
  const char* env = std::getenv("UNLEARN_LENS_TEST_TMP");
  const fs::path p = env ? fs::path(env) : fs::temp_directory_path() / "unlearn_lens_cli_test";
  fs::create_directories(p);
  return p;
}

std::string last_line(const std::string& s) {
  const auto end = s.find_last_not_of('\n');
  const auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

nlohmann::json error_json(const std::string& err) { return nlohmann::json::parse(last_line(err)); }

// Small config so the full pipeline runs in about a second.
fs::path small_config() {
  const fs::path p = tmp_dir() / "small.json";
  unlearn_lens::write_file_atomic(p, R"({
    "name": "small",
    "corpus": {"forget_count": 8, "retain_count": 24, "unrelated_count": 8, "holdout_count": 24},
    "model": {"embed_dim": 16, "hidden": [32, 32]},
    "train": {"steps": 250, "batch_size": 32},
    "unlearn": {"peak_lr": 0.003, "n_requests": 2, "steps_per_request": 3, "batch_size": 16},
    "probe_count": 64
  })");
  return p;
}

}  // namespace

TEST_CASE("classify with explicit accuracies prints the verdict as the last line") {
  const Result r = cli({"classify", "--forget", "78.9,65.4,76.6", "--retain", "65.5,54.0,65.2"});
  CHECK(r.code == 0);
  CHECK(last_line(r.out) == "regime=reversible,non-catastrophic dU_f=13.50 dU_r=11.50 dR_f=2.30");
  const Result t = cli({"classify", "--forget", "78.9,65.4,76.6", "--retain", "65.5,54.0,65.2",
                        "--catastrophic-drop", "10"});
  CHECK(last_line(t.out).starts_with("regime=reversible,catastrophic "));
}

TEST_CASE("usage errors exit 1 with a JSON error") {
  const Result r = cli({"classify", "--forget", "1,2"});
  CHECK(r.code == 1);
  CHECK(error_json(r.err).at("error").at("kind") == "validation");
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("an invalid method in the config exits 1 naming the field") {
  const fs::path cfg = tmp_dir() / "bad.json";
  unlearn_lens::write_file_atomic(cfg, R"({"unlearn": {"method": "GAX"}})");
  const Result r = cli({"run", "--config", cfg.string(), "--out", (tmp_dir() / "bad_run").string()});
  CHECK(r.code == 1);
  const auto j = error_json(r.err);
  CHECK(j.at("error").at("message").get<std::string>().find("unlearn.method") != std::string::npos);
}

TEST_CASE("an unreachable training floor exits 2") {
  const fs::path cfg = tmp_dir() / "underfit.json";
  unlearn_lens::write_file_atomic(cfg, R"({"train": {"steps": 1}})");
  const Result r = cli({"train", "--config", cfg.string(), "--out", (tmp_dir() / "underfit_run").string()});
  CHECK(r.code == 2);
  CHECK(error_json(r.err).at("error").at("kind") == "numerical");
}

TEST_CASE("step commands reproduce the one-shot run byte for byte") {
  const fs::path cfg = small_config();
  const fs::path one = tmp_dir() / "one_shot";
  const fs::path steps = tmp_dir() / "steps";
  fs::remove_all(one);
  fs::remove_all(steps);
  REQUIRE(cli({"run", "--config", cfg.string(), "--out", one.string()}).code == 0);
  REQUIRE(cli({"train", "--config", cfg.string(), "--out", steps.string()}).code == 0);
  REQUIRE(cli({"unlearn", "--run", steps.string()}).code == 0);
  REQUIRE(cli({"relearn", "--run", steps.string()}).code == 0);
  REQUIRE(cli({"report", "--run", steps.string()}).code == 0);
  for (const char* f : {"metrics.csv", "diagnostics.json", "config.json", "plots/cka_vs_layer.csv",
                        "plots/fisher_histogram.csv", "checkpoints/theta_u.tlmc"})
    CHECK(unlearn_lens::read_file(one / f) == unlearn_lens::read_file(steps / f));

  // Rerunning a step is idempotent.
  REQUIRE(cli({"report", "--run", steps.string()}).code == 0);
  CHECK(unlearn_lens::read_file(one / "diagnostics.json") == unlearn_lens::read_file(steps / "diagnostics.json"));

  const Result c = cli({"classify", "--run", steps.string()});
  CHECK(c.code == 0);
  CHECK(last_line(c.out).starts_with("regime="));

  const Result d = cli({"diagnose", "--run", steps.string()});
  CHECK(d.code == 0);
  CHECK(d.out.find("phase=theta_u mean_pca_distance=") != std::string::npos);
}

TEST_CASE("relearn before unlearn is a validation error") {
  const fs::path dir = tmp_dir() / "order";
  fs::remove_all(dir);
  REQUIRE(cli({"train", "--config", small_config().string(), "--out", dir.string()}).code == 0);
  const Result r = cli({"relearn", "--run", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("run unlearn first") != std::string::npos);
}

TEST_CASE("dump then diagnose a dump against itself: similarity 1, CKA 1, distance 0") {
  const fs::path dir = tmp_dir() / "dumps";
  fs::remove_all(dir);
  REQUIRE(cli({"run", "--config", small_config().string(), "--out", dir.string()}).code == 0);
  const fs::path a = dir / "theta0.ulns", b = dir / "theta_u.ulns";
  REQUIRE(cli({"dump", "--run", dir.string(), "--phase", "theta0", "--out", a.string()}).code == 0);
  REQUIRE(cli({"dump", "--run", dir.string(), "--phase", "theta_u", "--out", b.string()}).code == 0);

  const Result self = cli({"diagnose", "--orig", a.string(), "--upd", a.string()});
  REQUIRE(self.code == 0);
  const auto j = nlohmann::json::parse(self.out);
  CHECK(j.at("mean_pca_distance") == 0.0);
  for (const auto& l : j.at("layers")) {
    CHECK(l.at("pca_similarity") == 1.0);
    CHECK(l.at("cka") == 1.0);
  }

  const fs::path out = dir / "cmp.json";
  REQUIRE(cli({"diagnose", "--orig", a.string(), "--upd", b.string(), "--out", out.string()}).code == 0);
  CHECK(nlohmann::json::parse(unlearn_lens::read_file(out)).at("mean_pca_distance").get<double>() > 0.0);

  std::string bytes = unlearn_lens::read_file(a);
  bytes.resize(bytes.size() - 10);
  const fs::path cut = dir / "cut.ulns";
  unlearn_lens::write_file_atomic(cut, bytes);
  const Result bad = cli({"diagnose", "--orig", cut.string(), "--upd", a.string()});
  CHECK(bad.code == 1);
  CHECK(error_json(bad.err).at("error").at("code") == "truncated_payload");
}

TEST_CASE("probe sweeps emit one CSV row per scale") {
  const fs::path dir = tmp_dir() / "probe";
  fs::remove_all(dir);
  REQUIRE(cli({"train", "--config", small_config().string(), "--out", dir.string()}).code == 0);
  const Result r = cli({"probe", "--run", dir.string(), "--phase", "theta0", "--scales", "0,0.5,1"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line.starts_with("scale,perturbation_norm,"));
  std::getline(in, line);
  CHECK(line.starts_with("0,0,0,0,0,"));
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
  CHECK(cli({"probe", "--run", dir.string(), "--phase", "theta_x", "--scales", "1"}).code == 1);
}
