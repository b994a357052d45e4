# Copyright 2026 The unlearn-lens Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the unlearn-lens C++ core."""

import json

from . import _core
from ._core import DumpError, NumericalError, ValidationError, linear_cka, preset_names, read_dump, write_dump

__all__ = [
    "DumpError",
    "NumericalError",
    "ValidationError",
    "classify",
    "compare_dumps",
    "config",
    "linear_cka",
    "preset_names",
    "read_dump",
    "run_pipeline",
    "write_dump",
]


def config(doc=None, **sections):
    """Full config echo for a preset name, a dict, or keyword sections."""
    if isinstance(doc, str):
        doc = {"preset": doc}
    merged = dict(doc or {})
    merged.update(sections)
    return json.loads(_core.config_json(json.dumps(merged)))


def run_pipeline(cfg, seed=1):
    """Train, unlearn, relearn and diagnose one seed.

    Returns a dict with the metrics.csv text, the parsed diagnostics
    document and the verdict line.
    """
    if isinstance(cfg, str):
        cfg = {"preset": cfg}
    out = _core.run_pipeline(json.dumps(cfg), seed)
    out["diagnostics"] = json.loads(out.pop("diagnostics_json"))
    return out


def classify(forget, retain, **thresholds):
    """Regime verdict from (theta0, theta_u, theta_r) accuracies per task."""
    return _core.classify(tuple(forget), tuple(retain), **thresholds)


def compare_dumps(orig, upd):
    """Layer-wise diagnostics between two ULNS activation dumps."""
    return json.loads(_core.compare_dumps(str(orig), str(upd)))
