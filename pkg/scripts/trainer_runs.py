#!/usr/bin/env python3
"""DP-SGD on the synthetic Adult-like and Purchase-like tasks: per-epoch
cost of each analysis mode and the MIA / AI security trajectories.

Writes ``<task>_timing.csv`` (mode, epoch, seconds per analysis) and
``<task>_trajectory.csv`` (epoch, accuracy, mia_beta, ai_beta_full,
ai_beta_approx) for each task.
"""

import time
from pathlib import Path

from dpsgd_bayes.trainer import TrainConfig, encode_records, load_schema, train
from dpsgd_bayes.trainer.data import read_key_values
from dpsgd_bayes.trainer.synthetic import adult_like, purchase_like
from _common import parser, write_rows

TASKS = {"adult": adult_like, "purchase": purchase_like}


def main():
    ap = parser(__doc__.splitlines()[0], "results/trainer")
    ap.add_argument("--tasks", default="adult,purchase")
    ap.add_argument("--epochs", type=int, help="override the configured epoch count")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for task in args.tasks.split(","):
        header, rows, schema_text = TASKS[task](seed=args.seed)
        schema_path = out / f"{task}.schema"
        schema_path.write_text(schema_text)
        ds = encode_records(header, rows, load_schema(schema_path))
        kv = read_key_values(schema_path)
        if args.epochs:
            kv["epochs"] = str(args.epochs)
        cfg = TrainConfig.from_mapping(kv)
        timing, trajectory = [], []
        for mode in ("none", "mia", "ai_approx", "ai_full"):
            start = time.perf_counter()
            rep = train(ds, cfg, mode, seed=args.seed)
            print(f"{task}/{mode}: {len(rep.epochs)} epochs in {time.perf_counter() - start:.1f}s")
            for e in rep.epochs:
                timing.append({"mode": mode, "epoch": e.epoch} | e.wall_time)
            if mode == "ai_full":
                trajectory = [e.to_dict() for e in rep.epochs]
        write_rows(out / f"{task}_timing.csv", timing, ["mode", "epoch", "train", "mia", "ai_full", "ai_approx"])
        write_rows(out / f"{task}_trajectory.csv", trajectory,
                   ["epoch", "steps", "accuracy", "loss", "mia_beta", "ai_beta_full", "ai_beta_approx"])


if __name__ == "__main__":
    main()
