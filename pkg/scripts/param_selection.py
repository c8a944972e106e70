#!/usr/bin/env python3
"""Sampling rate needed for a target MIA Bayes security, per noise multiplier.

Writes ``param_selection.csv`` (beta, sigma, steps, p). The curve is linear
in sigma: p = erfinv(1 - beta) * sqrt(2) * sigma / sqrt(T).
"""

import warnings
from pathlib import Path

import numpy as np

from dpsgd_bayes.bounds import BoundWarning, select_sampling_rate
from _common import parser, write_rows


def main():
    ap = parser(__doc__.splitlines()[0], "results/param_selection")
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--betas", default="0.9,0.95,0.98,0.99")
    args = ap.parse_args()
    rows = []
    for beta in map(float, args.betas.split(",")):
        for sigma in np.linspace(0.5, 10, 39):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", BoundWarning)
                p = select_sampling_rate(beta, float(sigma), args.steps)
            rows.append({"beta": beta, "sigma": sigma, "steps": args.steps, "p": p})
    slope = select_sampling_rate(0.98, 1.0, args.steps)
    print(f"beta=0.98, T={args.steps}: p = {slope:.3e} * sigma")
    write_rows(Path(args.out) / "param_selection.csv", rows, ["beta", "sigma", "steps", "p"])


if __name__ == "__main__":
    main()
