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

#include <map>
#include <string>

namespace unlearn_lens {

/// Band edges in accuracy percentage points.
struct RegimeThresholds {
  double catastrophic_drop = 20.0;
  double irreversible_residual = 10.0;
  double near_zero_band = 3.0;

  void validate() const;
};

enum class Reversibility { kReversible, kIrreversible, kIndeterminate };
enum class Catastrophicity { kCatastrophic, kNonCatastrophic, kIndeterminate };

std::string to_string(Reversibility r);
std::string to_string(Catastrophicity c);

/// Accuracy (in percent) of one task at the three pipeline phases.
struct PhaseAccuracies {
  double theta0 = 0.0;
  double theta_u = 0.0;
  double theta_r = 0.0;
};

struct Deltas {
  double unlearn = 0.0;  // E(theta0) - E(theta_u)
  double relearn = 0.0;  // E(theta0) - E(theta_r)
};

Deltas compute_deltas(const PhaseAccuracies& acc);
/// Same, reading "theta0", "theta_u", "theta_r" from a phase -> accuracy map.
/// Throws naming the missing phase.
Deltas compute_deltas(const std::map<std::string, double>& by_phase);

struct RegimeVerdict {
  double du_forget = 0.0;
  double du_retain = 0.0;
  double dr_forget = 0.0;
  double dr_retain = 0.0;
  Reversibility reversibility = Reversibility::kIndeterminate;
  Catastrophicity catastrophicity = Catastrophicity::kIndeterminate;
  RegimeThresholds thresholds;

  /// "reversible,non-catastrophic" etc.; "indeterminate" when either axis is.
  [[nodiscard]] std::string label() const;
  /// regime=<label> dU_f=<..> dU_r=<..> dR_f=<..>
  [[nodiscard]] std::string line() const;
};

/// Reversibility reads the forget residual after relearning: reversible at
/// or below near_zero_band, irreversible at or above irreversible_residual.
/// Catastrophic needs both unlearning drops at or above catastrophic_drop;
/// a large retain drop with a small forget drop is indeterminate; anything
/// else is non-catastrophic.
RegimeVerdict classify(const Deltas& forget, const Deltas& retain, const RegimeThresholds& thresholds = {});

}  // namespace unlearn_lens
