#!/usr/bin/env python3
"""Run the standard desk training recipe and save every artifact.

Produces stage1.nepf, stage2.nepf, critic.nepf plus run logs under the
output directory (default runs/desk). Takes roughly 10-20 CPU minutes.

Usage:
    python scripts/desk_recipe.py [--seed 0] [--out-dir runs/desk]
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nextedit.critic import save_critic
from nextedit.recipe import run_desk_recipe
from nextedit.train import save_checkpoint


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="runs/desk")
    args = parser.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    start = time.time()
    artifacts = run_desk_recipe(seed=args.seed,
                                progress=lambda msg: print(f"[{time.time()-start:7.1f}s] {msg}"))

    s1 = os.path.join(args.out_dir, "stage1.nepf")
    s2 = os.path.join(args.out_dir, "stage2.nepf")
    cr = os.path.join(args.out_dir, "critic.nepf")
    save_checkpoint(s1, artifacts.stage1, artifacts.tok, meta={"stage": "t2i", "seed": args.seed})
    save_checkpoint(s2, artifacts.stage2, artifacts.tok, meta={"stage": "edit", "seed": args.seed})
    save_critic(cr, artifacts.critic, meta={"seed": args.seed})
    artifacts.pretrain_log.write(os.path.join(args.out_dir, "pretrain_log.jsonl"))
    artifacts.finetune_log.write(os.path.join(args.out_dir, "finetune_log.jsonl"))

    print(f"[{time.time()-start:7.1f}s] done")
    print(f"  pretrain loss {artifacts.pretrain_log.rows[-1]['loss']:.4f}")
    print(f"  finetune loss {artifacts.finetune_log.rows[-1]['loss']:.4f}")
    print(f"  checkpoints: {s1} {s2} {cr}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
