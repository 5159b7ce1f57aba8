#!/usr/bin/env python3
"""Masked regeneration vs full regeneration on held-out synthetic edits.

Loads a stage-2 checkpoint (train one with scripts/desk_recipe.py), builds
a fresh held-out shard, runs both benchmark modes, and prints the
comparison table.

Usage:
    python scripts/edit_ablation.py --ckpt runs/desk/stage2.nepf [--n 200]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nextedit.benchmark import run_benchmark
from nextedit.data import decode_edit_record, iter_records
from nextedit.train import load_checkpoint


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--seed", type=int, default=9000)
    args = parser.parse_args()

    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    triples = [decode_edit_record(r, tok)
               for r in iter_records("edit", args.n, args.seed, tok)]

    rows = []
    for mode in ("nep", "ntp_full"):
        report = run_benchmark(model, tok, triples, mode, seed=args.seed)
        rows.append((mode, report["aggregate"]))

    print(f"{'mode':<10} {'L1':>8} {'L2':>8} {'feature':>8} {'steps':>7}")
    for mode, agg in rows:
        print(f"{mode:<10} {agg['l1']:>8.4f} {agg['l2']:>8.4f} "
              f"{agg['feature_sim']:>8.4f} {agg['mean_steps']:>7.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
