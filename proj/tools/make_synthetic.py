#!/usr/bin/env python3
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
"""Writes the deterministic synthetic train/test splits used by the demo run.

Two HUC12 basins: a dense one on a 500 m grid (local free-shot library) and a
sparse one, so test rows see between zero and three neighbors within 1 km.
"""

import argparse
import json
import math
import random
from pathlib import Path

DENSE_HUC = "120401020103"
SPARSE_HUC = "120401020207"
ORIGIN = (-95.80, 30.00)
KM_PER_DEG_LAT = 111.195
KM_PER_DEG_LON = KM_PER_DEG_LAT * math.cos(math.radians(ORIGIN[1]))


def offset(dx_km, dy_km):
    return ORIGIN[0] + dx_km / KM_PER_DEG_LON, ORIGIN[1] + dy_km / KM_PER_DEG_LAT


def features(rng, wet):
    """Predictors given a latent wetness in [0, 1]."""
    return {
        "age": round(rng.uniform(5, 60), 1),
        "FAR": round(rng.uniform(0.0, 0.1), 4),
        "Poly_num": float(rng.randint(0, 80)),
        "poi_num": float(rng.choice([0, 0, 0, 1, 2])),
        "fndn": round(max(0.0, 2.5 - 1.5 * wet + rng.gauss(0, 0.3)), 3),
        "Popu_num": round(rng.uniform(0, 60), 3),
        "elevation": round(70 - 25 * wet + rng.gauss(0, 4), 3),
        "dis_coa": round(rng.uniform(60, 90), 3),
        "impervious": round(rng.uniform(0, 40), 3),
        "roughness": round(rng.uniform(0.05, 0.4), 4),
        "dis_stream": round(max(1.0, 400 * (1 - wet) + rng.gauss(0, 40)), 2),
        "hand": round(max(0.1, 20 * (1 - wet) + rng.gauss(0, 2)), 3),
        "claims_past_50yr": max(0, int(round(30 * wet + rng.gauss(0, 3)))),
        "Rain_max": round(10 + 6 * wet + rng.gauss(0, 0.8), 2),
    }


def sum_pde(rng, wet):
    s = wet + rng.gauss(0, 0.08)
    if s < 0.46:
        return 0.0
    return round(min(1.0, (s - 0.46) / 0.3), 6) if s < 0.76 else round(1.0 + (s - 0.76) * 2, 6)


def label(s):
    return 0 if s == 0.0 else (1 if s <= 1.0 else 2)


def row(rng, row_id, lon, lat, huc, wet):
    r = {"index": row_id, "x": round(lon, 7), "y": round(lat, 7)}
    r.update(features(rng, wet))
    s = sum_pde(rng, wet)
    r.update({"Sum_PDE": s, "huc12": huc, "PDE_category": label(s)})
    return r


def wetness(dx, dy):
    """Smooth field so nearby cells share damage levels."""
    return min(1.0, max(0.0, 0.5 + 0.45 * math.sin(dx / 1.7) * math.cos(dy / 2.3)))


def generate(seed):
    rng = random.Random(seed)
    train, test = [], []
    next_id = 1000
    # Dense basin: 12 x 10 cells at 500 m.
    for i in range(12):
        for j in range(10):
            dx, dy = 0.5 * i, 0.5 * j
            train.append(row(rng, next_id, *offset(dx, dy), DENSE_HUC, wetness(dx, dy)))
            next_id += 1
    # Sparse basin east of it: 30 cells at 1.6 km.
    for i in range(6):
        for j in range(5):
            dx, dy = 9.0 + 1.6 * i, 1.6 * j
            train.append(row(rng, next_id, *offset(dx, dy), SPARSE_HUC, wetness(dx, dy)))
            next_id += 1
    # Test rows: interior of the dense grid, the sparse gaps and far cells.
    next_id = 5000
    for k in range(20):
        dx, dy = rng.uniform(0.2, 5.3), rng.uniform(0.2, 4.3)
        test.append(row(rng, next_id, *offset(dx, dy), DENSE_HUC, wetness(dx, dy)))
        next_id += 1
    for k in range(20):
        dx, dy = rng.uniform(8.5, 17.5), rng.uniform(-0.5, 7.0)
        test.append(row(rng, next_id, *offset(dx, dy), SPARSE_HUC, wetness(dx, dy)))
        next_id += 1
    for k in range(10):
        dx, dy = rng.uniform(20.0, 30.0), rng.uniform(10.0, 20.0)
        test.append(row(rng, next_id, *offset(dx, dy), SPARSE_HUC, wetness(dx, dy)))
        next_id += 1
    return train, test


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "synthetic")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    train, test = generate(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", train), ("test", test)):
        with open(args.out / f"{name}.jsonl", "w") as f:
            for r in rows:
                f.write(json.dumps(r) + "\n")
        counts = [sum(1 for r in rows if r["PDE_category"] == c) for c in range(3)]
        print(f"{name}: {len(rows)} rows, labels {counts}")


if __name__ == "__main__":
    main()
