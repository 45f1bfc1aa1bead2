# Copyright 2026 The floodrag Authors.
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


"""Python access to the floodrag pipeline and its building blocks."""

import json

from . import _floodrag
from ._floodrag import (
    FloodragError,
    composite_score,
    efficiency,
    haversine_km,
    js_divergence,
    ks_statistic,
    prompt_hash,
    severity_score,
)

__all__ = [
    "FloodragError",
    "apply_downgrade",
    "classification_metrics",
    "composite_score",
    "efficiency",
    "haversine_km",
    "js_divergence",
    "ks_statistic",
    "parse_prediction",
    "parse_trajectory",
    "plan_injection",
    "prompt_hash",
    "run_stage",
    "severity_score",
]


def parse_trajectory(raw):
    return json.loads(_floodrag.parse_trajectory_json(raw))


def parse_prediction(line):
    return json.loads(_floodrag.parse_prediction_json(line))


def apply_downgrade(pred, think, neighbors=()):
    """neighbors: iterable of (label, reasoning) pairs."""
    return json.loads(_floodrag.apply_downgrade_json(pred, think, list(neighbors)))


def plan_injection(neighbor_count, nearest_label=None):
    return json.loads(_floodrag.plan_injection_json(neighbor_count, nearest_label))


def classification_metrics(y, yhat):
    return json.loads(_floodrag.classification_metrics_json(list(y), list(yhat)))


def run_stage(stage, config_path):
    """Runs one CLI stage ("profile", ..., "ablation", or "run")."""
    return json.loads(_floodrag.run_stage_json(stage, str(config_path)))
