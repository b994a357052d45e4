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

#include "unlearn_lens/regimes.hpp"

#include <cmath>
#include <cstdio>

#include "unlearn_lens/error.hpp"

namespace unlearn_lens {

void RegimeThresholds::validate() const {
  for (double v : {catastrophic_drop, irreversible_residual, near_zero_band})
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("regime thresholds must be finite and >= 0");
  if (!(near_zero_band < irreversible_residual))
    throw ValidationError("near_zero_band must be below irreversible_residual");
}

std::string to_string(Reversibility r) {
  switch (r) {
    case Reversibility::kReversible:
      return "reversible";
    case Reversibility::kIrreversible:
      return "irreversible";
    case Reversibility::kIndeterminate:
      break;
  }
  return "indeterminate";
}

std::string to_string(Catastrophicity c) {
  switch (c) {
    case Catastrophicity::kCatastrophic:
      return "catastrophic";
    case Catastrophicity::kNonCatastrophic:
      return "non-catastrophic";
    case Catastrophicity::kIndeterminate:
      break;
  }
  return "indeterminate";
}

Deltas compute_deltas(const PhaseAccuracies& acc) {
  return {acc.theta0 - acc.theta_u, acc.theta0 - acc.theta_r};
}

Deltas compute_deltas(const std::map<std::string, double>& by_phase) {
  auto get = [&](const char* phase) {
    const auto it = by_phase.find(phase);
    if (it == by_phase.end()) throw ValidationError(std::string("missing phase ") + phase);
    return it->second;
  };
  return compute_deltas(PhaseAccuracies{get("theta0"), get("theta_u"), get("theta_r")});
}

std::string RegimeVerdict::label() const {
  if (reversibility == Reversibility::kIndeterminate || catastrophicity == Catastrophicity::kIndeterminate)
    return "indeterminate";
  return to_string(reversibility) + "," + to_string(catastrophicity);
}

std::string RegimeVerdict::line() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, " dU_f=%.2f dU_r=%.2f dR_f=%.2f", du_forget, du_retain, dr_forget);
  return "regime=" + label() + buf;
}

RegimeVerdict classify(const Deltas& forget, const Deltas& retain, const RegimeThresholds& thresholds) {
  thresholds.validate();
  RegimeVerdict v;
  v.thresholds = thresholds;
  v.du_forget = forget.unlearn;
  v.dr_forget = forget.relearn;
  v.du_retain = retain.unlearn;
  v.dr_retain = retain.relearn;

  if (v.dr_forget <= thresholds.near_zero_band)
    v.reversibility = Reversibility::kReversible;
  else if (v.dr_forget >= thresholds.irreversible_residual)
    v.reversibility = Reversibility::kIrreversible;
  else
    v.reversibility = Reversibility::kIndeterminate;

  if (v.du_retain >= thresholds.catastrophic_drop)
    v.catastrophicity = v.du_forget >= thresholds.catastrophic_drop ? Catastrophicity::kCatastrophic
                                                                    : Catastrophicity::kIndeterminate;
  else
    v.catastrophicity = Catastrophicity::kNonCatastrophic;
  return v;
}

}  // namespace unlearn_lens
