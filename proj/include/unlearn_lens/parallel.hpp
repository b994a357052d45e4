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
#include <functional>

namespace unlearn_lens {

/// Worker cap: UNLEARN_LENS_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t thread_cap();

/// Runs fn(0..n-1) on up to thread_cap() threads. Tasks must write to
/// disjoint outputs; results are then independent of the thread count. The
/// exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace unlearn_lens
