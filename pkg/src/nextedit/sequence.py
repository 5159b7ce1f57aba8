"""Generation orders and model-input layouts.

A layout describes one complete model input: the condition prefix (text,
optionally source-image tokens and mask selectors), the generation order,
and per-step teacher tokens for training. The positional-embedding index
consumed at step ``i`` is always ``gen_order[i]`` -- the grid position the
model is about to write.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab
from .errors import InputError, LayoutError
from .tokenizer import EditMask, TokenGrid, mask_token_ids

TAG_TEXT = 0
TAG_SOURCE = 1
TAG_MASK = 2


@dataclass
class TextTokens:
    """Fixed-length text ids, PAD only as a contiguous left prefix."""

    ids: np.ndarray

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        nonpad = np.flatnonzero(self.ids != vocab.PAD)
        if nonpad.size:
            first = nonpad[0]
            if np.any(self.ids[first:] == vocab.PAD):
                raise InputError("PAD must form a contiguous left prefix")

    @classmethod
    def encode(cls, text: str, text_len: int) -> "TextTokens":
        ids = vocab.encode_words(text)
        if len(ids) > text_len:
            raise InputError(f"text of {len(ids)} words exceeds prefix length {text_len}")
        return cls(np.array([vocab.PAD] * (text_len - len(ids)) + ids, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class GenerationOrder:
    """A permutation of grid positions, or an ascending subsequence for edits."""

    positions: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if len(np.unique(self.positions)) != len(self.positions):
            raise InputError("order contains duplicate positions")
        if self.positions.size and self.positions.min() < 0:
            raise InputError("order positions must be non-negative")

    def __len__(self) -> int:
        return len(self.positions)


def sample_order(length: int, rng: np.random.Generator, raster_prob: float = 0.0) -> GenerationOrder:
    """Uniformly random permutation; with probability ``raster_prob``, identity."""
    if length < 1:
        raise InputError("order length must be >= 1")
    if not 0.0 <= raster_prob <= 1.0:
        raise InputError(f"raster_prob must lie in [0, 1]: got {raster_prob}")
    if rng.random() < raster_prob:
        return GenerationOrder(np.arange(length))
    return GenerationOrder(rng.permutation(length))


def editing_order(mask: EditMask) -> GenerationOrder:
    """Ascending grid positions whose patch-mask bit is set."""
    return GenerationOrder(np.flatnonzero(mask.patch != 0))


@dataclass
class SequenceLayout:
    """Assembled model input. ``prefix_len`` slots of conditioning, then one
    input slot per generation step."""

    text_ids: np.ndarray
    gen_order: np.ndarray
    grid_tokens: int
    source_ids: np.ndarray | None = None
    mask_selectors: np.ndarray | None = None
    source_masked: np.ndarray | None = None  # bool per grid slot: hide source token
    teacher_ids: np.ndarray | None = None
    forced_ids: np.ndarray | None = None     # teacher-forced prefix of the gen segment

    @property
    def text_len(self) -> int:
        return len(self.text_ids)

    @property
    def prefix_len(self) -> int:
        return self.text_len + (2 * self.grid_tokens if self.source_ids is not None else 0)

    @property
    def n_steps(self) -> int:
        return len(self.gen_order)

    @property
    def pe_index_per_step(self) -> np.ndarray:
        return self.gen_order

    def prefix_ids(self) -> np.ndarray:
        parts = [self.text_ids]
        if self.source_ids is not None:
            parts += [self.source_ids, self.mask_selectors]
        return np.concatenate(parts)

    def segment_tags(self) -> np.ndarray:
        tags = [np.full(self.text_len, TAG_TEXT)]
        if self.source_ids is not None:
            tags += [np.full(self.grid_tokens, TAG_SOURCE), np.full(self.grid_tokens, TAG_MASK)]
        return np.concatenate(tags).astype(np.int64)


def build_pretrain_layout(text: TextTokens, grid: TokenGrid | None,
                          order: GenerationOrder) -> SequenceLayout:
    """Text-conditioned full-image layout under an arbitrary full order."""
    length = len(order)
    if grid is not None:
        if length != grid.ids.shape[0]:
            raise LayoutError(f"order length {length} != grid length {grid.ids.shape[0]}")
        teacher = grid.ids[order.positions]
        grid_tokens = grid.ids.shape[0]
    else:
        teacher = None
        grid_tokens = length
    if np.any(np.sort(order.positions) != np.arange(length)):
        raise LayoutError("pretraining order must be a full permutation")
    return SequenceLayout(text_ids=text.ids, gen_order=order.positions,
                          grid_tokens=grid_tokens, teacher_ids=teacher)


def build_raster_layout(text: TextTokens, grid: TokenGrid) -> SequenceLayout:
    """Reference next-token layout: raster order, teacher stream as stored.

    Kept as an independent construction (no order machinery) so identity-order
    layouts can be checked against it.
    """
    length = grid.ids.shape[0]
    return SequenceLayout(text_ids=text.ids, gen_order=np.arange(length),
                          grid_tokens=length, teacher_ids=grid.ids.copy())


def build_edit_layout(text: TextTokens, source: TokenGrid, mask: EditMask | None,
                      targets: TokenGrid | None = None,
                      order: GenerationOrder | None = None,
                      mask_source: bool = False,
                      generate_all: bool = False) -> SequenceLayout:
    """Editing layout: text, source tokens, mask selectors, masked-slot steps.

    With no mask (or an empty one) generation falls back to the full raster
    order. ``order`` may override the default ascending editing order with any
    permutation of the same position set. ``mask_source`` hides the source
    tokens at generated positions behind a placeholder embedding.
    ``generate_all`` keeps the mask selectors in the prefix but generates every
    position in raster order (the full-regeneration ablation).
    """
    length = source.ids.shape[0]
    if mask is not None and mask.patch.shape[0] != length:
        raise InputError(f"mask has {mask.patch.shape[0]} patches for {length} source tokens")
    if targets is not None and targets.ids.shape[0] != length:
        raise LayoutError("target grid shape does not match source")

    if mask is None or mask.edit_count() == 0:
        selectors = np.zeros(length, dtype=np.int64)
        positions = np.arange(length)
    elif generate_all:
        selectors = mask_token_ids(mask)
        positions = np.arange(length)
    else:
        selectors = mask_token_ids(mask)
        positions = editing_order(mask).positions
    if order is not None:
        if not np.array_equal(np.sort(order.positions), positions):
            raise LayoutError("override order must permute exactly the editable positions")
        positions = order.positions

    teacher = targets.ids[positions] if targets is not None else None
    source_masked = None
    if mask_source:
        source_masked = np.zeros(length, dtype=bool)
        source_masked[positions] = True
    return SequenceLayout(text_ids=text.ids, gen_order=positions, grid_tokens=length,
                          source_ids=source.ids.copy(), mask_selectors=selectors,
                          source_masked=source_masked, teacher_ids=teacher)


def build_zero_shot_layout(text: TextTokens, source: TokenGrid,
                           keep_positions: np.ndarray) -> SequenceLayout:
    """Pretraining-style layout ordering kept positions (teacher-forced from the
    source) ahead of the positions to regenerate."""
    length = source.ids.shape[0]
    keep = np.unique(np.asarray(keep_positions, dtype=np.int64))
    if keep.size and (keep.min() < 0 or keep.max() >= length):
        raise InputError("keep positions out of grid range")
    regen = np.setdiff1d(np.arange(length), keep)
    order = np.concatenate([keep, regen])
    return SequenceLayout(text_ids=text.ids, gen_order=order, grid_tokens=length,
                          forced_ids=source.ids[keep])
