"""Regenerate tests/data/ot_oracle.json.

Runs the long projected-subgradient reference on a fixed roster of small
random transport instances and freezes the resulting objectives. The test
suite compares the fast solver against these stored values, so this script
only needs to run when the instance roster or the reference settings
change (it takes a few minutes).

Usage: python3 scripts/freeze_ot_oracle.py
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import numpy as np

TESTS = Path(__file__).resolve().parent.parent / "tests"
sys.path.insert(0, str(TESTS))

from oracles import pg_transport_minimum, transport_cost_scalar  # noqa: E402

INSTANCES = 50
EPSILON = 0.1
TAU = 10.0
SEED = 20240817


def instance_roster(count=INSTANCES, seed=SEED):
    rng = np.random.default_rng(seed)
    roster = []
    for k in range(count):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        a = rng.uniform(0.1, 2.0, n)
        src = rng.uniform(0.0, 5.0, (n, 2))
        # every third instance uses unit target masses, like dot annotations
        b = np.ones(m) if k % 3 == 0 else rng.uniform(0.5, 1.5, m)
        dst = rng.uniform(0.0, 5.0, (m, 2))
        roster.append((a, src, b, dst))
    return roster


def main():
    records = []
    t0 = time.time()
    for k, (a, src, b, dst) in enumerate(instance_roster()):
        C = transport_cost_scalar(src, dst, kind="exp")
        value, _plan = pg_transport_minimum(C, a, b, EPSILON, TAU, TAU)
        records.append(
            {
                "a": a.tolist(),
                "src": src.tolist(),
                "b": b.tolist(),
                "dst": dst.tolist(),
                "epsilon": EPSILON,
                "tau": TAU,
                "cost": "exp",
                "objective": value,
            }
        )
        print(f"[{k + 1:2d}/{INSTANCES}] n={len(a)} m={len(b)} "
              f"objective={value:.9f} ({time.time() - t0:.0f}s)")

    out = TESTS / "data" / "ot_oracle.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {"seed": SEED, "epsilon": EPSILON, "tau": TAU, "instances": records}
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
