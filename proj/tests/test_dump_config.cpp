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

#include <filesystem>

#include "checks.hpp"
#include "unlearn_lens/binary_io.hpp"
#include "unlearn_lens/config.hpp"
#include "unlearn_lens/dump.hpp"

using namespace unlearn_lens;
namespace fs = std::filesystem;

namespace {

ActivationDump sample_dump() {
  return make_dump("model-a", Domain::kRetain,
                   {oracle::random_matrix(5, 3, 1), oracle::random_matrix(5, 4, 2), oracle::random_matrix(5, 2, 3)});
}

DumpErrorCode code_of(const std::string& bytes) {
  try {
    decode_dump(bytes);
  } catch (const DumpError& e) {
    return e.code();
  }
  FAIL("decode_dump accepted a bad dump");
  return DumpErrorCode::kIo;
}

}  // namespace

TEST_CASE("dump round trip is bitwise identical at float32") {
  const ActivationDump d = sample_dump();
  const auto path = fs::temp_directory_path() / "unlearn_lens_dump_test.ulns";
  write_dump(d, path);
  const ActivationDump back = read_dump(path);
  CHECK(back == d);
  CHECK(encode_dump(back) == read_file(path));
  fs::remove(path);
}

TEST_CASE("dump byte layout is little-endian with the ULNS header") {
  const std::string b = encode_dump(sample_dump());
  CHECK(b.substr(0, 4) == "ULNS");
  CHECK(b[4] == 1);
  CHECK(b[5] == 0);
  CHECK(static_cast<unsigned char>(b[8]) == 7);  // label length
  CHECK(b.substr(10, 7) == "model-a");
  CHECK(b[17] == 1);  // retain
  CHECK(b[18] == 3);  // layer count
  const std::size_t header = 4 + 4 + 2 + 7 + 1 + 4;
  const std::size_t payload = 3 * 12 + 4 * (15 + 20 + 10);
  CHECK(b.size() == header + payload);
}

TEST_CASE("truncated dumps name the layer") {
  std::string b = encode_dump(sample_dump());
  b.resize(b.size() - 3);
  CHECK(code_of(b) == DumpErrorCode::kTruncated);
  CHECK_THROWS_WITH(decode_dump(b), "truncated payload in layer 2");
  CHECK(code_of(b.substr(0, 12)) == DumpErrorCode::kTruncated);
}

TEST_CASE("mismatched row counts, bad magic and bad version get distinct codes") {
  ActivationDump d = sample_dump();
  d.layers[1].rows = 4;
  d.layers[1].values.resize(4 * 4);
  CHECK_THROWS_AS(d.validate(), DumpError);
  // Patch the rows field of layer 1 in an encoded valid dump.
  std::string b = encode_dump(sample_dump());
  const std::size_t layer1 = 22 + 12 + 15 * 4;
  b[layer1 + 4] = 4;
  CHECK(code_of(b) == DumpErrorCode::kRowMismatch);

  std::string magic = encode_dump(sample_dump());
  magic[0] = 'X';
  CHECK(code_of(magic) == DumpErrorCode::kBadMagic);

  std::string version = encode_dump(sample_dump());
  version[4] = 2;
  CHECK(code_of(version) == DumpErrorCode::kBadVersion);

  CHECK(code_of(encode_dump(sample_dump()) + "x") == DumpErrorCode::kBadHeader);
  CHECK(to_string(DumpErrorCode::kTruncated) == "truncated_payload");
}

TEST_CASE("reading a missing dump is an io error") {
  try {
    read_dump("/nonexistent/x.ulns");
    FAIL("expected an error");
  } catch (const DumpError& e) {
    CHECK(e.code() == DumpErrorCode::kIo);
  }
}

TEST_CASE("dump values outside float32 range are refused") {
  Matrix m = oracle::random_matrix(4, 2, 1);
  m(0, 0) = 1e300;
  CHECK_THROWS_AS(make_dump("x", Domain::kForget, {m}), NumericalError);
}

TEST_CASE("config: presets, overrides and a full echo round trip") {
  const ExperimentConfig c = config_from_json(nlohmann::json::parse(R"({
    "preset": "irreversible",
    "seeds": [3, 4],
    "unlearn": {"method": "NPO+KL", "beta": 0.2, "kl_direction": "model_to_reference"},
    "relearn": {"sources": ["forget", "unrelated"]}
  })"));
  CHECK(c.name == "irreversible");
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.unlearn.n_requests == 20);
  CHECK(c.unlearn.loss.method == UnlearnMethod::kNPOKL);
  CHECK(c.unlearn.loss.kl_direction == KlDirection::kModelToReference);
  CHECK(c.relearn.sources.size() == 2);
  const ExperimentConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
}

TEST_CASE("config errors carry the field path") {
  auto err = [](const char* text) {
    try {
      config_from_json(nlohmann::json::parse(text));
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(err(R"({"unlearn": {"method": "GAX"}})").starts_with("config field 'unlearn.method'"));
  CHECK(err(R"({"unlearn": {"lr": 1}})") == "config field 'unlearn.lr': unknown field");
  CHECK(err(R"({"bogus": 1})") == "config field 'bogus': unknown field");
  CHECK(err(R"({"train": {"steps": -3}})").starts_with("config field 'train.steps'"));
  CHECK(err(R"({"relearn": {"sources": ["forget", "nowhere"]}})").find("relearn.sources") != std::string::npos);
  CHECK(err(R"({"unlearn": {"n_requests": 500}})").find("n_requests") != std::string::npos);
}
