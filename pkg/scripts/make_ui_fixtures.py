#!/usr/bin/env python3
"""Regenerate the frontend's shared test fixtures.

Writes frontend/fixtures/shared_masks.json (100 pixel-mask -> patch-mask
vectors straight from the server-side patchifier) and
frontend/fixtures/two_turn_session.json (a scripted two-turn editing
session recorded from the real engine with a seeded, untrained model).
Everything is Philox-seeded, so the output is byte-stable across machines.

Usage:
    python scripts/make_ui_fixtures.py
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nextedit.data import render_scene, sample_scene
from nextedit.editing import multi_turn_edit
from nextedit.model import ImageTokenModel, ModelConfig
from nextedit.rng import make_rng
from nextedit.tokenizer import TokenizerConfig, mask_from_patches, patchify_mask

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "frontend", "fixtures")


def shared_masks(tok: TokenizerConfig) -> dict:
    rng = make_rng(4242)
    cases = []
    # edge cases first, then a sweep of coverages
    specials = [np.zeros((tok.image_h, tok.image_w), np.uint8),
                np.ones((tok.image_h, tok.image_w), np.uint8)]
    single = np.zeros((tok.image_h, tok.image_w), np.uint8)
    single[0, 0] = 1
    specials.append(single)
    for mask in specials:
        cases.append(mask)
    while len(cases) < 100:
        coverage = rng.uniform(0.02, 0.9)
        cases.append((rng.random((tok.image_h, tok.image_w)) < coverage).astype(np.uint8))
    return {
        "shape": {"height": tok.image_h, "width": tok.image_w, "patch": tok.patch},
        "cases": [{"pixels": m.reshape(-1).tolist(),
                   "patch": patchify_mask(m, tok).patch.tolist()} for m in cases],
    }


def two_turn_session(tok: TokenizerConfig) -> dict:
    model = ImageTokenModel(ModelConfig(d_model=32, n_layers=1, n_heads=2, ffn_dim=64,
                                        edit_tokens=True), seed=77)
    model.eval()
    source = render_scene(sample_scene(make_rng(77), tok, n_objects=1), tok)

    patch_a = np.zeros(tok.grid_tokens, np.uint8)
    patch_a[[0, 1, 8, 9]] = 1
    patch_b = np.zeros(tok.grid_tokens, np.uint8)
    patch_b[[9, 10, 17, 18]] = 1  # overlaps turn 1 at position 9
    mask_a = mask_from_patches(patch_a, tok).pixel
    mask_b = mask_from_patches(patch_b, tok).pixel
    turns = [(mask_a, "recolor the square to blue"),
             (mask_b, "recolor the square to green")]
    results = multi_turn_edit(model, tok, source, turns, seed=7)

    return {
        "shape": {"height": tok.image_h, "width": tok.image_w, "patch": tok.patch},
        "source": source.reshape(-1).tolist(),
        "turns": [
            {
                "instruction": instruction,
                "mask_pixels": mask.reshape(-1).tolist(),
                "mask_patch": patchify_mask(mask, tok).patch.tolist(),
                "image": result.image.reshape(-1).tolist(),
                "positions": result.positions.tolist(),
                "steps": result.steps,
            }
            for (mask, instruction), result in zip(turns, results)
        ],
    }


def main() -> int:
    tok = TokenizerConfig()
    os.makedirs(FIXTURE_DIR, exist_ok=True)
    for name, payload in (("shared_masks.json", shared_masks(tok)),
                          ("two_turn_session.json", two_turn_session(tok))):
        path = os.path.join(FIXTURE_DIR, name)
        with open(path, "w") as fh:
            json.dump(payload, fh, separators=(",", ":"))
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
