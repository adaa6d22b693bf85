#!/usr/bin/env python3
"""Run the entropy-gate quantile ablation from an existing run directory.

Expects corpus.json and sft.ckpt in the run directory (produce them with
scripts/run_pipeline.py or the gen-data and sft subcommands first).

Usage: python3 scripts/run_ablation.py [--config configs/default.json]
                                       [--out runs/exp] [--seed N]
"""

import argparse
import sys
import time

from earl.cli import main as cli_main


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
    t0 = time.time()
    code = cli_main(["ablate", "--config", args.config] + extra)
    print(f"[ablate] exit {code} in {time.time() - t0:.1f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())
