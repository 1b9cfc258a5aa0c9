#!/usr/bin/env python3
"""House-mismatch study: how much does the attacker lose when its
training houses differ from the releaser's?

Runs every scenario named in the config's mismatch section and writes
one accuracy row per (scenario, lambda) to mismatch.csv.
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
    ap.add_argument("--config", default="configs/mismatch.json")
    ap.add_argument("--out", default="runs/mismatch")
    ap.add_argument("--seed", type=int, help="override the config seed")
    args = ap.parse_args()

    data_dir = os.path.join(args.out, "data")
    study_dir = os.path.join(args.out, "study")
    seed = ["--seed", str(args.seed)] if args.seed is not None else []

    run(["gen-data", "--config", args.config, "--out", data_dir] + seed)
    run(
        ["mismatch", "--config", args.config,
         "--data", os.path.join(data_dir, "dataset.csv"), "--out", study_dir] + seed
    )
    print(f"mismatch table: {os.path.join(study_dir, 'mismatch.csv')}")


if __name__ == "__main__":
    main_script()
