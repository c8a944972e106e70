#!/usr/bin/env python3
"""Closed-form MIA bound against the PLD accountant: error heat map and
wall-clock timings.

Writes ``heatmap.csv`` (p, sigma, epochs, steps, h, closed_form, pld, gap)
and ``timing.csv`` (p, sigma, method, epochs, seconds, beta). With several
``--rates`` this is the reduced tightness grid over sampling rates.
"""

import time
from pathlib import Path

from dpsgd_bayes.bounds import DpSgdConfig, mia_bound
from dpsgd_bayes.pld import beta_via_pld, benchmark, grid_spacing_for
from _common import parser, write_rows


def floats(text):
    return [float(v) for v in text.split(",")]


def main():
    ap = parser(__doc__.splitlines()[0], "results/pld_comparison")
    ap.add_argument("--rates", default="0.001")
    ap.add_argument("--sigmas", default="0.5,1,2,4")
    ap.add_argument("--epochs", default="1,10,50,100")
    ap.add_argument("--timing-sigma", type=float, default=1.0)
    args = ap.parse_args()
    heat, timing = [], []
    for p in floats(args.rates):
        for sigma in floats(args.sigmas):
            for epochs in floats(args.epochs):
                cfg = DpSgdConfig(p, sigma, 1.0, max(1, round(epochs / p)))
                h = grid_spacing_for(cfg)
                start = time.perf_counter()
                pld = beta_via_pld(cfg, h)
                closed = mia_bound(cfg).nominal
                heat.append({"p": p, "sigma": sigma, "epochs": epochs, "steps": cfg.steps, "h": h,
                             "closed_form": closed, "pld": pld, "gap": abs(closed - pld)})
                print(f"p={p:g} sigma={sigma:g} epochs={epochs:g}: gap {abs(closed - pld):.4f} "
                      f"({time.perf_counter() - start:.1f}s)")
        for row in benchmark(p, args.timing_sigma, floats(args.epochs)):
            timing.append({"p": p, "sigma": args.timing_sigma} | vars(row))
    out = Path(args.out)
    write_rows(out / "heatmap.csv", heat, ["p", "sigma", "epochs", "steps", "h", "closed_form", "pld", "gap"])
    write_rows(out / "timing.csv", timing, ["p", "sigma", "method", "epochs", "seconds", "beta"])


if __name__ == "__main__":
    main()
