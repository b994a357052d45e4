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

#include <filesystem>
#include <string>

#include "json.hpp"

#include "unlearn_lens/protocols.hpp"

namespace unlearn_lens {

/// Strict JSON schema: unknown keys and wrong types are rejected with the
/// dotted field path in the message. A top-level "preset" key seeds the
/// defaults from a named preset before the other keys are applied.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full echo of every field (no preset indirection).
nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace unlearn_lens
