#!/usr/bin/env python3
"""TPR@FPR implied by the MIA bound, next to the ROC of the optimal attacker.

The bound curve uses the large reference configuration. The attack ROC is
simulated on a smaller configuration whose trace fits in memory, with its
own bound for comparison.

Writes ``tpr_bound.csv`` and ``attack_roc.csv``.
"""

import math
from pathlib import Path

import numpy as np

from dpsgd_bayes.attack import GameConfig, roc_sweep
from dpsgd_bayes.bounds import DpSgdConfig, TprQuery, mia_bound, tpr_bound
from dpsgd_bayes.mixture import worst_case_pair
from _common import parser, write_rows


def main():
    ap = parser(__doc__.splitlines()[0], "results/tpr")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=200_000)
    args = ap.parse_args()
    ref = DpSgdConfig(0.0001, 2.0, 1.0, 500_000)
    beta = mia_bound(ref).nominal
    fprs = np.concatenate([np.geomspace(1e-4, 1e-1, 31), np.linspace(0.12, 1.0, 45)])
    rows = [{"fpr": f, "tpr_bound": tpr_bound(beta, TprQuery(float(f)))} for f in fprs]
    print(f"reference beta={beta:.4f}: TPR@0.1 <= {tpr_bound(beta, TprQuery(0.1)):.3f}, "
          f"TPR@0.01 <= {tpr_bound(beta, TprQuery(0.01)):.3f}")

    p, sigma, steps = 0.05, 1.0, 100
    small = mia_bound(DpSgdConfig(p, sigma, 1.0, steps)).nominal
    a, b = worst_case_pair(p, sigma, steps)
    g = GameConfig(a, b, trials=args.trials, seed=args.seed)
    roc = []
    for pt in roc_sweep(g, [0.0, *np.exp(np.linspace(-4, 4, 65)), math.inf]):
        roc.append(vars(pt) | {"tpr_bound": tpr_bound(small, TprQuery(pt.fpr))})
    print(f"attack config p={p}, sigma={sigma}, T={steps}: beta={small:.4f}, "
          f"max TPR-FPR={max(r['tpr'] - r['fpr'] for r in roc):.4f}")
    out = Path(args.out)
    write_rows(out / "tpr_bound.csv", rows, ["fpr", "tpr_bound"])
    write_rows(out / "attack_roc.csv", roc, ["threshold", "fpr", "tpr", "ci_half_width", "accuracy", "tpr_bound"])


if __name__ == "__main__":
    main()
