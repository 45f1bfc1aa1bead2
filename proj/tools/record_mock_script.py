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
"""Turns a run's transcript.jsonl into a mock-backend script.

Each line of the script is {"prompt_sha256", "response"}; --transient-fault
adds a one-shot transient failure for the first call whose key starts with
the given prefix, so scripted runs also exercise the retry path.
"""

import argparse
import json
from pathlib import Path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("transcript", type=Path)
    parser.add_argument("out", type=Path)
    parser.add_argument("--transient-fault", action="append", default=[], metavar="CALL_KEY_PREFIX")
    args = parser.parse_args()

    responses = {}
    keys = []
    with open(args.transcript) as f:
        for line in f:
            t = json.loads(line)
            responses.setdefault(t["prompt_sha256"], t["response"])
            keys.append((t["call_key"], t["prompt_sha256"]))

    lines = [{"prompt_sha256": h, "response": r} for h, r in sorted(responses.items())]
    for prefix in args.transient_fault:
        match = next((h for k, h in sorted(keys) if k.startswith(prefix)), None)
        if match is None:
            raise SystemExit(f"no call key starts with {prefix!r}")
        lines.append({"prompt_sha256": match, "fault": "transient", "count": 1})

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as f:
        for line in lines:
            f.write(json.dumps(line, sort_keys=True) + "\n")
    print(f"{len(responses)} responses, {len(args.transient_fault)} faults -> {args.out}")


if __name__ == "__main__":
    main()
