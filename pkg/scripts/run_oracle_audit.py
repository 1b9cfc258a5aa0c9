#!/usr/bin/env python3
"""Audit the exact small-alphabet bounds on a batch of random processes.

Every spec must satisfy the information-flow inequality chain and the
cross-entropy lower bound to numerical precision; the command exits
nonzero (numeric category) if any slack goes negative.
"""

import argparse
import sys

from meterpriv.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--specs", type=int, default=1000)
    ap.add_argument("--out", default="runs/oracle")
    args = ap.parse_args()
    sys.exit(main(["oracle-verify", "--specs", str(args.specs), "--out", args.out]))
