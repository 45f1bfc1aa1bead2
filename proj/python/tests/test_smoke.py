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


import hashlib
import json
import os
import pathlib

import pytest

import floodrag

SOURCE_DIR = pathlib.Path(os.environ.get("FLOODRAG_SOURCE_DIR", pathlib.Path(__file__).parents[2])).resolve()
FIXTURES = SOURCE_DIR / "tests" / "fixtures"


def test_divergence_helpers():
    assert floodrag.ks_statistic([0, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    assert floodrag.js_divergence([1, 2, 3], [1, 2, 3]) == 0.0
    assert floodrag.composite_score(0.685, 0.647) == pytest.approx(0.6736, abs=5e-4)


def test_haversine_one_degree_latitude():
    assert floodrag.haversine_km(-95.5, 30.0, -95.5, 31.0) == pytest.approx(111.19, abs=0.05)


def test_injection_plan():
    assert floodrag.plan_injection(3, 0)["prototypes_per_level"] == 0
    plan = floodrag.plan_injection(1, 2)
    assert plan["hard_examples"] == ["severity_boundary.for_1", "severity_boundary.for_2"]
    with pytest.raises(ValueError):
        floodrag.plan_injection(4, 0)


def test_parsers_accept_samples():
    t = floodrag.parse_trajectory((FIXTURES / "appendix_c_trajectory.txt").read_text().strip())
    assert t["ok"] and t["answer"] == 1
    p = floodrag.parse_prediction((FIXTURES / "appendix_e_prediction.jsonl").read_text().strip())
    assert p["ok"] and p["row_id"] == 5448
    bad = floodrag.parse_trajectory("<THINK>x</THINK><answer>1</answer>")
    assert not bad["ok"] and bad["violations"]


def test_downgrade():
    d = floodrag.apply_downgrade(2, "Minor, shallow ponding that quickly receded.", [(0, "minor shallow")])
    assert d["final_label"] == 1
    assert d["fired_rule"] == "rule_2_to_1"
    assert floodrag.apply_downgrade(0, "anything")["final_label"] == 0


def test_metrics():
    assert floodrag.severity_score([0, 1, 2, 2], [1, 1, 1, 2]) == 0.75
    m = floodrag.classification_metrics([0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 1, 2])
    assert m["macro_f1"] == pytest.approx(2 / 3)
    assert floodrag.efficiency(0.8192, 0.010) == pytest.approx(81.92)
    with pytest.raises(ValueError):
        floodrag.efficiency(0.5, 0.0)


def test_prompt_hash():
    expected = hashlib.sha256("sys\n\nuser".encode()).hexdigest()
    assert floodrag.prompt_hash("sys", "user") == expected


def test_scripted_pipeline(tmp_path):
    config = json.loads((SOURCE_DIR / "configs" / "synthetic_scripted.json").read_text())
    config["train"] = str(SOURCE_DIR / "data" / "synthetic" / "train.jsonl")
    config["test"] = str(SOURCE_DIR / "data" / "synthetic" / "test.jsonl")
    config["backend"]["mock_script"] = str(SOURCE_DIR / "data" / "synthetic" / "mock_script.jsonl")
    config["output_dir"] = str(tmp_path / "run")
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))

    result = floodrag.run_stage("run", path)
    assert result["failed_rows"] == 0
    predictions = (tmp_path / "run" / "predictions.jsonl").read_text().splitlines()
    assert len(predictions) == 50
    metrics = json.loads((tmp_path / "run" / "metrics.json").read_text())
    assert 0.0 <= metrics["prediction"]["macro_f1"] <= 1.0


def test_errors_surface_as_exceptions(tmp_path):
    with pytest.raises(Exception):
        floodrag.run_stage("profile", tmp_path / "missing.json")
