#!/usr/bin/env python3
"""Critic reward vs refinement rounds on a seeded prompt batch.

Generates one image per prompt with the stage-2 model, then refines for
--rounds rounds and prints the mean critic reward (and the analytic
scene-match oracle) after each round.

Usage:
    python scripts/refine_scaling.py --ckpt runs/desk/stage2.nepf \
        --critic runs/desk/critic.nepf [--n 200] [--rounds 4]
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nextedit.critic import load_critic, scene_match_score
from nextedit.data import caption_for_scene, sample_scene
from nextedit.model import SamplerConfig
from nextedit.refine import RefineConfig, refine_loop
from nextedit.rng import STREAM_SAMPLE, STREAM_SCENE, make_rng
from nextedit.sequence import GenerationOrder, TextTokens, build_pretrain_layout
from nextedit.tokenizer import TokenGrid, decode_tokens
from nextedit.train import load_checkpoint


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--critic", required=True)
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--rounds", type=int, default=4)
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--candidates", type=int, default=4)
    parser.add_argument("--seed", type=int, default=7000)
    args = parser.parse_args()

    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    critic, _, _ = load_critic(args.critic)
    critic.eval()

    scene_rng = make_rng(args.seed, STREAM_SCENE)
    prompts = [caption_for_scene(sample_scene(scene_rng, tok)) for _ in range(args.n)]
    cfg = RefineConfig(k=args.k, candidates=args.candidates, rounds=args.rounds)

    rewards = np.zeros((args.n, args.rounds + 1))
    oracle = np.zeros((args.n, args.rounds + 1))
    for i, prompt in enumerate(prompts):
        text = TextTokens.encode(prompt, model.cfg.text_len)
        layout = build_pretrain_layout(text, None,
                                       GenerationOrder(np.arange(model.cfg.grid_tokens)))
        out = model.decode(layout, SamplerConfig(temperature=1.0),
                           make_rng(args.seed + i, STREAM_SAMPLE))
        grid = TokenGrid(out.ids, tok.rows, tok.cols)
        trajectory = refine_loop(model, tok, grid, prompt, critic, cfg,
                                 make_rng(args.seed + i))
        for r, point in enumerate(trajectory):
            rewards[i, r] = point.reward
            oracle[i, r] = scene_match_score(decode_tokens(point.grid, tok), prompt, tok)

    print(f"{'round':<6} {'critic reward':>14} {'oracle score':>13}")
    for r in range(args.rounds + 1):
        print(f"{r:<6} {rewards[:, r].mean():>14.4f} {oracle[:, r].mean():>13.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
