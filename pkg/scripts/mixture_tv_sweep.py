#!/usr/bin/env python3
"""Single-step TV between the gradient mixture and its Gaussian surrogate
as a function of p/sigma, at several fixed sampling rates.

Writes ``tv_sweep.csv`` (p, sigma, T, ratio, value, half_width, pinsker).
"""

import math
from pathlib import Path

import numpy as np

from dpsgd_bayes.mixture import kl_mixture_upper_bound, tv_sweep
from _common import parser, write_rows


def main():
    ap = parser(__doc__.splitlines()[0], "results/mixture_tv")
    ap.add_argument("--points", type=int, default=25)
    ap.add_argument("--rates", default="0.001,0.01,0.1")
    args = ap.parse_args()
    ratios = np.geomspace(1e-4, 1e-1, args.points)
    rows = []
    for p in map(float, args.rates.split(",")):
        for row in tv_sweep(ratios, p=p):
            row["pinsker"] = math.sqrt(kl_mixture_upper_bound(p, row["sigma"], 1) / 2)
            rows.append(row)
        at = next(r for r in rows if r["p"] == p and abs(math.log10(r["ratio"]) + 3) < 1e-9)
        print(f"p={p:g}: TV at p/sigma=1e-3 is {at['value']:.3g}")
    write_rows(Path(args.out) / "tv_sweep.csv", rows,
               ["p", "sigma", "T", "ratio", "value", "half_width", "pinsker"])


if __name__ == "__main__":
    main()
