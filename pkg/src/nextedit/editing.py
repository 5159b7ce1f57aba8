"""Inference-time editing.

Masked editing regenerates only the tokens under the patchified mask and
fills them back into the source grid, so everything outside mask-covered
patches is byte-identical by construction. Without a mask the whole grid
is regenerated in raster order (global edit). A pretrained stage-1 model
can edit zero-shot by teacher-forcing kept positions ahead of the
positions to regenerate.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .model import ImageTokenModel, SamplerConfig
from .rng import STREAM_SAMPLE, make_rng
from .sequence import TextTokens, build_edit_layout, build_zero_shot_layout
from .tokenizer import (EditMask, TokenGrid, TokenizerConfig, decode_tokens,
                        encode_image, patchify_mask)


@dataclass
class EditRequest:
    image: np.ndarray                 # H x W x 3 uint8
    instruction: str
    mask_pixels: np.ndarray | None = None
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(greedy=True))
    seed: int = 0


@dataclass
class EditResult:
    image: np.ndarray
    grid: TokenGrid
    positions: np.ndarray       # grid positions that were regenerated
    generated_ids: np.ndarray   # tokens written at those positions
    steps: int                  # sampled decode steps
    logprobs: np.ndarray

    @property
    def edit_count(self) -> int:
        return len(self.positions)

    @property
    def logprob_sum(self) -> float:
        return float(self.logprobs.sum())


def fill_back(source: TokenGrid, positions: np.ndarray, ids: np.ndarray) -> TokenGrid:
    """Replace exactly ``positions`` of the source grid with ``ids``."""
    out = source.copy()
    out.ids[np.asarray(positions, dtype=np.int64)] = np.asarray(ids, dtype=np.int64)
    return out


def nep_edit(model: ImageTokenModel, tok_cfg: TokenizerConfig, req: EditRequest) -> EditResult:
    """Mask-scoped edit with the fine-tuned model; raster fallback when the
    mask is absent or empty."""
    if not model.cfg.edit_tokens:
        raise ConfigError("editing requires a stage-2 model (edit-selector pair)")
    source = encode_image(req.image, tok_cfg)
    text = TextTokens.encode(req.instruction, model.cfg.text_len)
    mask: EditMask | None = None
    if req.mask_pixels is not None:
        mask = patchify_mask(req.mask_pixels, tok_cfg)
    layout = build_edit_layout(text, source, mask)
    rng = make_rng(req.seed, STREAM_SAMPLE)
    out = model.decode(layout, req.sampler, rng)
    grid = fill_back(source, layout.gen_order, out.ids)
    return EditResult(image=decode_tokens(grid, tok_cfg), grid=grid,
                      positions=layout.gen_order.copy(), generated_ids=out.ids,
                      steps=len(out.ids), logprobs=out.logprobs)


def zero_shot_edit(model: ImageTokenModel, tok_cfg: TokenizerConfig, source: TokenGrid,
                   keep_positions: np.ndarray, instruction: str,
                   sampler: SamplerConfig | None = None, seed: int = 0) -> EditResult:
    """Stage-1 editing: kept positions are teacher-forced from the source in
    raster order, the remainder is sampled, then filled back."""
    sampler = sampler or SamplerConfig(greedy=True)
    text = TextTokens.encode(instruction, model.cfg.text_len)
    layout = build_zero_shot_layout(text, source, keep_positions)
    rng = make_rng(seed, STREAM_SAMPLE)
    out = model.decode(layout, sampler, rng)
    n_keep = len(layout.forced_ids)
    regen_positions = layout.gen_order[n_keep:]
    regen_ids = out.ids[n_keep:]
    grid = fill_back(source, regen_positions, regen_ids)
    return EditResult(image=decode_tokens(grid, tok_cfg), grid=grid,
                      positions=regen_positions.copy(), generated_ids=regen_ids,
                      steps=len(regen_ids), logprobs=out.logprobs[n_keep:])


def multi_turn_edit(model: ImageTokenModel, tok_cfg: TokenizerConfig, image: np.ndarray,
                    turns: list[tuple[np.ndarray | None, str]],
                    sampler: SamplerConfig | None = None, seed: int = 0) -> list[EditResult]:
    """Chain edits: the output of turn t is the source of turn t+1. Turn t
    uses seed + t, so a single-turn call equals a direct edit."""
    if not turns:
        raise InputError("multi-turn editing needs at least one turn")
    sampler = sampler or SamplerConfig(greedy=True)
    results = []
    current = image
    for t, (mask_pixels, instruction) in enumerate(turns):
        req = EditRequest(image=current, instruction=instruction,
                          mask_pixels=mask_pixels, sampler=sampler, seed=seed + t)
        result = nep_edit(model, tok_cfg, req)
        results.append(result)
        current = result.image
    return results


def outside_mask_checksum(image: np.ndarray, patch_mask: np.ndarray,
                          tok_cfg: TokenizerConfig) -> str:
    """SHA-256 over the pixels of patches the mask does not cover."""
    keep = np.flatnonzero(np.asarray(patch_mask) == 0)
    p = tok_cfg.patch
    h = hashlib.sha256()
    for pos in keep:
        r, c = divmod(int(pos), tok_cfg.cols)
        h.update(np.ascontiguousarray(
            image[r * p:(r + 1) * p, c * p:(c + 1) * p]).tobytes())
    return h.hexdigest()
