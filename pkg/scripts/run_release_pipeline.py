#!/usr/bin/env python3
"""Single-operating-point pipeline: train one releaser at the config's
privacy weight, retrain a held-out attacker against it, then score the
release on held-out days (trade-off point, spectra, quality indicators).
"""

import argparse
import os
import sys

from meterpriv.cli import main


def run(argv: list[str]) -> None:
    print(f"$ meterpriv {' '.join(argv)}", flush=True)
    code = main(argv)
    if code != 0:
        sys.exit(code)


def main_script() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/small.json")
    ap.add_argument("--out", default="runs/pipeline")
    ap.add_argument("--seed", type=int, help="override the config seed")
    args = ap.parse_args()

    out = args.out
    data = os.path.join(out, "data", "dataset.csv")
    run_dir = os.path.join(out, "run")
    seed = ["--seed", str(args.seed)] if args.seed is not None else []

    run(["gen-data", "--config", args.config, "--out", os.path.join(out, "data")] + seed)
    run(["train", "--config", args.config, "--data", data, "--out", run_dir] + seed)
    # attack writes test_attacker.json into the run dir, where eval looks by default
    run(["attack", "--config", args.config, "--data", data,
         "--checkpoint", run_dir, "--out", run_dir] + seed)
    run(["eval", "--config", args.config, "--data", data,
         "--checkpoint", run_dir, "--out", os.path.join(out, "eval")] + seed)
    run(["psd", "--config", args.config, "--data", data,
         "--checkpoint", run_dir, "--out", os.path.join(out, "psd")] + seed)
    run(["indicators", "--config", args.config, "--data", data,
         "--checkpoint", run_dir, "--out", os.path.join(out, "indicators")] + seed)
    print(f"pipeline artifacts under {out}/")


if __name__ == "__main__":
    main_script()
