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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unlearn_lens/error.hpp"
#include "unlearn_lens/linalg.hpp"
#include "unlearn_lens/toy_lm.hpp"

namespace unlearn_lens {

/// ULNS activation dump, little-endian:
///   "ULNS" | u32 version (1) | u16 label length | label (UTF-8) | u8 source tag
///   | u32 L | L x (u32 layer index | u32 rows | u32 cols | rows*cols float32)
struct ActivationLayer {
  std::uint32_t index = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;  // row-major

  friend bool operator==(const ActivationLayer&, const ActivationLayer&) = default;
};

struct ActivationDump {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  std::string label;
  Domain source = Domain::kForget;
  std::vector<ActivationLayer> layers;

  /// Throws DumpError unless every layer is consistent and all share a row count.
  void validate() const;
  /// float64 copies of the layer payloads.
  [[nodiscard]] std::vector<Matrix> matrices() const;

  friend bool operator==(const ActivationDump&, const ActivationDump&) = default;
};

enum class DumpErrorCode {
  kIo = 10,
  kBadMagic = 11,
  kBadVersion = 12,
  kTruncated = 13,
  kRowMismatch = 14,
  kBadHeader = 15,  // label, tag, zero layers, trailing bytes, size fields
};

std::string to_string(DumpErrorCode code);

class DumpError : public ValidationError {
 public:
  DumpError(DumpErrorCode code, const std::string& what) : ValidationError(what), code_(code) {}
  [[nodiscard]] DumpErrorCode code() const noexcept { return code_; }

 private:
  DumpErrorCode code_;
};

std::string encode_dump(const ActivationDump& dump);
ActivationDump decode_dump(std::string bytes);
void write_dump(const ActivationDump& dump, const std::filesystem::path& path);
ActivationDump read_dump(const std::filesystem::path& path);

/// Dump of captured activations (float64 rounded to float32).
ActivationDump make_dump(const std::string& label, Domain source, const std::vector<Matrix>& activations);

}  // namespace unlearn_lens
