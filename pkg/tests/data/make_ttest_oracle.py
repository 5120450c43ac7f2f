"""Regenerate ttest_oracle.json with scipy (reference values, not our code)."""

import json
from pathlib import Path

import numpy as np
from scipy import stats


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    for i in range(100):
        n = int(rng.integers(2, 501))
        a = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 5), n)
        b = a + rng.normal(rng.uniform(-1, 1), rng.uniform(0.05, 3), n)
        if i % 10 == 0:
            b = a + rng.normal(0, 1e-3, n)
        res = stats.ttest_rel(a, b)
        cases.append({"a": a.tolist(), "b": b.tolist(), "t": float(res.statistic), "p": float(res.pvalue)})
    out = Path(__file__).with_name("ttest_oracle.json")
    out.write_text(json.dumps({"generator": "scipy.stats.ttest_rel", "cases": cases}) + "\n")


if __name__ == "__main__":
    main()
