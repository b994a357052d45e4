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

#include "unlearn_lens/dump.hpp"

#include <cmath>
#include <limits>

#include "unlearn_lens/binary_io.hpp"

namespace unlearn_lens {

namespace {
constexpr std::string_view kMagic = "ULNS";
}

std::string to_string(DumpErrorCode code) {
  switch (code) {
    case DumpErrorCode::kIo:
      return "io";
    case DumpErrorCode::kBadMagic:
      return "bad_magic";
    case DumpErrorCode::kBadVersion:
      return "bad_version";
    case DumpErrorCode::kTruncated:
      return "truncated_payload";
    case DumpErrorCode::kRowMismatch:
      return "row_mismatch";
    case DumpErrorCode::kBadHeader:
      return "bad_header";
  }
  return "unknown";
}

void ActivationDump::validate() const {
  if (version != kVersion) throw DumpError(DumpErrorCode::kBadVersion, "unsupported dump version " + std::to_string(version));
  if (label.size() > std::numeric_limits<std::uint16_t>::max())
    throw DumpError(DumpErrorCode::kBadHeader, "label longer than 65535 bytes");
  if (layers.empty()) throw DumpError(DumpErrorCode::kBadHeader, "dump has no layers");
  for (const auto& l : layers) {
    if (static_cast<std::uint64_t>(l.rows) * l.cols != l.values.size())
      throw DumpError(DumpErrorCode::kBadHeader,
                      "layer " + std::to_string(l.index) + " payload does not match rows x cols");
    if (l.rows != layers.front().rows)
      throw DumpError(DumpErrorCode::kRowMismatch, "row count mismatch: layer " + std::to_string(l.index) + " has " +
                                                       std::to_string(l.rows) + " rows, layer " +
                                                       std::to_string(layers.front().index) + " has " +
                                                       std::to_string(layers.front().rows));
  }
}

std::vector<Matrix> ActivationDump::matrices() const {
  std::vector<Matrix> out;
  for (const auto& l : layers) {
    std::vector<double> v(l.values.begin(), l.values.end());
    out.emplace_back(l.rows, l.cols, std::move(v));
  }
  return out;
}

std::string encode_dump(const ActivationDump& dump) {
  dump.validate();
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(dump.version);
  w.u16(static_cast<std::uint16_t>(dump.label.size()));
  w.bytes(dump.label);
  w.u8(static_cast<std::uint8_t>(dump.source));
  w.u32(static_cast<std::uint32_t>(dump.layers.size()));
  for (const auto& l : dump.layers) {
    w.u32(l.index);
    w.u32(l.rows);
    w.u32(l.cols);
    for (float v : l.values) w.f32(v);
  }
  return w.data();
}

ActivationDump decode_dump(std::string bytes) {
  ByteReader r(std::move(bytes));
  auto need = [&](std::size_t n, const std::string& what) {
    if (!r.has(n)) throw DumpError(DumpErrorCode::kTruncated, "truncated payload: " + what);
  };
  if (!r.has(4) || r.bytes(4) != kMagic) throw DumpError(DumpErrorCode::kBadMagic, "bad magic: not a ULNS dump");
  ActivationDump d;
  need(4, "header");
  d.version = r.u32();
  if (d.version != ActivationDump::kVersion)
    throw DumpError(DumpErrorCode::kBadVersion, "unsupported dump version " + std::to_string(d.version));
  need(2, "header");
  const std::uint16_t label_len = r.u16();
  need(label_len, "label");
  d.label = r.bytes(label_len);
  need(1 + 4, "header");
  const std::uint8_t tag = r.u8();
  if (tag > 2) throw DumpError(DumpErrorCode::kBadHeader, "unknown source tag " + std::to_string(tag));
  d.source = static_cast<Domain>(tag);
  const std::uint32_t count = r.u32();
  if (count == 0) throw DumpError(DumpErrorCode::kBadHeader, "dump has no layers");
  for (std::uint32_t i = 0; i < count; ++i) {
    ActivationLayer l;
    need(12, "layer header " + std::to_string(i));
    l.index = r.u32();
    l.rows = r.u32();
    l.cols = r.u32();
    if (!d.layers.empty() && l.rows != d.layers.front().rows)
      throw DumpError(DumpErrorCode::kRowMismatch, "row count mismatch: layer " + std::to_string(l.index) + " has " +
                                                       std::to_string(l.rows) + " rows, layer " +
                                                       std::to_string(d.layers.front().index) + " has " +
                                                       std::to_string(d.layers.front().rows));
    const std::uint64_t n = static_cast<std::uint64_t>(l.rows) * l.cols;
    if (n * 4 > r.remaining()) throw DumpError(DumpErrorCode::kTruncated, "truncated payload in layer " + std::to_string(l.index));
    l.values.resize(n);
    for (auto& v : l.values) v = r.f32();
    d.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0)
    throw DumpError(DumpErrorCode::kBadHeader, std::to_string(r.remaining()) + " trailing bytes after the last layer");
  for (const auto& l : d.layers)
    for (float v : l.values)
      if (!std::isfinite(v)) throw DumpError(DumpErrorCode::kBadHeader, "non-finite value in layer " + std::to_string(l.index));
  return d;
}

void write_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  write_file_atomic(path, encode_dump(dump));
}

ActivationDump read_dump(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw DumpError(DumpErrorCode::kIo, e.what());
  }
  return decode_dump(std::move(bytes));
}

ActivationDump make_dump(const std::string& label, Domain source, const std::vector<Matrix>& activations) {
  ActivationDump d;
  d.label = label;
  d.source = source;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const Matrix& m = activations[i];
    ActivationLayer l;
    l.index = static_cast<std::uint32_t>(i);
    l.rows = static_cast<std::uint32_t>(m.rows());
    l.cols = static_cast<std::uint32_t>(m.cols());
    l.values.reserve(m.size());
    for (double v : m.values()) {
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) throw NumericalError("activation outside float32 range in layer " + std::to_string(i));
      l.values.push_back(f);
    }
    d.layers.push_back(std::move(l));
  }
  d.validate();
  return d;
}

}  // namespace unlearn_lens
