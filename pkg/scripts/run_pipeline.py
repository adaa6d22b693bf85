#!/usr/bin/env python3
"""Run the full experiment pipeline: data -> SFT -> RL -> eval -> analysis.

Usage: python3 scripts/run_pipeline.py [--config configs/default.json]
                                       [--out runs/exp] [--seed N]
"""

import argparse
import sys
import time

from earl.cli import main as cli_main

STAGES = ("gen-data", "sft", "train", "eval", "analyze")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/default.json")
    ap.add_argument("--out")
    ap.add_argument("--seed")
    args = ap.parse_args()
    extra = []
    if args.out:
        extra += ["--out", args.out]
    if args.seed is not None:
        extra += ["--seed", args.seed]
    for stage in STAGES:
        t0 = time.time()
        code = cli_main([stage, "--config", args.config] + extra)
        print(f"[{stage}] exit {code} in {time.time() - t0:.1f}s")
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
