"""Palette tokenizer: RGB images <-> token grids, pixel masks -> patch masks.

Images are quantized per non-overlapping p x p patch against a fixed RGB
palette (default: the 4x4x4 lattice over {0, 85, 170, 255}), so encode and
decode are exact inverses on patch-aligned palette imagery. Editing masks
are max-pooled to patch granularity and mapped to a two-entry selector
stream (edit / non-edit).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import CorruptionError, InputError

UNEDIT = 0
EDIT = 1


def default_palette() -> np.ndarray:
    """The 64-entry RGB lattice palette; id = 16*r + 4*g + b for levels 0..3."""
    levels = np.array([0, 85, 170, 255], dtype=np.uint8)
    r, g, b = np.meshgrid(levels, levels, levels, indexing="ij")
    return np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)


@dataclass
class TokenizerConfig:
    image_h: int = 32
    image_w: int = 32
    patch: int = 4
    palette: np.ndarray = field(default_factory=default_palette)

    def __post_init__(self) -> None:
        if self.image_h % self.patch or self.image_w % self.patch:
            raise InputError(f"image {self.image_h}x{self.image_w} not divisible by patch {self.patch}")
        self.palette = np.asarray(self.palette, dtype=np.uint8)
        if len(np.unique(self.palette, axis=0)) != len(self.palette):
            raise InputError("palette entries must be distinct")

    @property
    def rows(self) -> int:
        return self.image_h // self.patch

    @property
    def cols(self) -> int:
        return self.image_w // self.patch

    @property
    def grid_tokens(self) -> int:
        return self.rows * self.cols

    @property
    def vocab(self) -> int:
        return len(self.palette)

    def to_json(self) -> dict:
        return {"image_h": self.image_h, "image_w": self.image_w,
                "patch": self.patch, "palette": self.palette.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "TokenizerConfig":
        return cls(image_h=obj["image_h"], image_w=obj["image_w"],
                   patch=obj["patch"], palette=np.array(obj["palette"], dtype=np.uint8))


@dataclass
class TokenGrid:
    """Raster-ordered token ids with their 2-D extents."""

    ids: np.ndarray
    rows: int
    cols: int

    def __post_init__(self) -> None:
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.shape != (self.rows * self.cols,):
            raise InputError(f"expected {self.rows * self.cols} ids, got {self.ids.shape}")

    def copy(self) -> "TokenGrid":
        return TokenGrid(self.ids.copy(), self.rows, self.cols)

    def as_2d(self) -> np.ndarray:
        return self.ids.reshape(self.rows, self.cols)


@dataclass
class EditMask:
    """Pixel-level mask plus its patch-level max-pool, raster flattened."""

    pixel: np.ndarray  # [H, W] in {0, 1}
    patch: np.ndarray  # [rows * cols] in {0, 1}

    def edit_count(self) -> int:
        return int(self.patch.sum())


def _patch_view(arr: np.ndarray, p: int) -> np.ndarray:
    h, w = arr.shape[:2]
    rest = arr.shape[2:]
    return arr.reshape(h // p, p, w // p, p, *rest).swapaxes(1, 2)


def encode_image(rgb: np.ndarray, cfg: TokenizerConfig) -> TokenGrid:
    """Quantize each patch's mean color to its nearest palette entry.

    Ties in squared RGB distance break toward the lowest palette id.
    """
    rgb = np.asarray(rgb)
    if rgb.shape != (cfg.image_h, cfg.image_w, 3):
        raise InputError(f"expected {cfg.image_h}x{cfg.image_w}x3 image, got {rgb.shape}")
    means = _patch_view(rgb.astype(np.float64), cfg.patch).mean(axis=(2, 3))
    flat = means.reshape(-1, 3)
    d2 = ((flat[:, None, :] - cfg.palette[None].astype(np.float64)) ** 2).sum(axis=2)
    ids = np.argmin(d2, axis=1)
    return TokenGrid(ids, cfg.rows, cfg.cols)


def decode_tokens(grid: TokenGrid, cfg: TokenizerConfig) -> np.ndarray:
    """Paint each token as a uniform patch of its palette color."""
    if grid.ids.min(initial=0) < 0 or grid.ids.max(initial=0) >= cfg.vocab:
        raise CorruptionError("token id out of palette range")
    if (grid.rows, grid.cols) != (cfg.rows, cfg.cols):
        raise InputError(f"grid {grid.rows}x{grid.cols} does not match config {cfg.rows}x{cfg.cols}")
    colors = cfg.palette[grid.as_2d()]  # [rows, cols, 3]
    return np.repeat(np.repeat(colors, cfg.patch, axis=0), cfg.patch, axis=1)


def patchify_mask(pixel_mask: np.ndarray, cfg: TokenizerConfig) -> EditMask:
    """Max-pool a binary pixel mask over non-overlapping p x p windows."""
    pixel_mask = np.asarray(pixel_mask)
    if pixel_mask.shape != (cfg.image_h, cfg.image_w):
        raise InputError(f"expected {cfg.image_h}x{cfg.image_w} mask, got {pixel_mask.shape}")
    binary = (pixel_mask != 0).astype(np.uint8)
    patch = _patch_view(binary, cfg.patch).max(axis=(2, 3)).reshape(-1)
    return EditMask(pixel=binary, patch=patch)


def mask_from_patches(patch: np.ndarray, cfg: TokenizerConfig) -> EditMask:
    """Lift a patch-level mask back to pixels (every pixel of a set patch)."""
    patch = (np.asarray(patch) != 0).astype(np.uint8)
    if patch.shape != (cfg.grid_tokens,):
        raise InputError(f"expected {cfg.grid_tokens} patch bits, got {patch.shape}")
    pixel = np.repeat(np.repeat(patch.reshape(cfg.rows, cfg.cols), cfg.patch, axis=0),
                      cfg.patch, axis=1)
    return EditMask(pixel=pixel, patch=patch)


def mask_token_ids(mask: EditMask) -> np.ndarray:
    """Selector per grid position: EDIT where the patch mask is set, else UNEDIT."""
    return np.where(mask.patch != 0, EDIT, UNEDIT).astype(np.int64)


# --- PNG I/O -----------------------------------------------------------------

def image_to_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_image(data: bytes, cfg: TokenizerConfig | None = None) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as exc:
        raise InputError(f"could not decode PNG image: {exc}") from exc
    arr = np.asarray(img, dtype=np.uint8)
    if cfg is not None and arr.shape != (cfg.image_h, cfg.image_w, 3):
        raise InputError(f"expected {cfg.image_h}x{cfg.image_w} image, got {arr.shape[:2]}")
    return arr


def mask_to_png(pixel_mask: np.ndarray) -> bytes:
    """0 = keep, 255 = edit, single channel."""
    buf = io.BytesIO()
    gray = np.where(np.asarray(pixel_mask) != 0, 255, 0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_to_mask(data: bytes, cfg: TokenizerConfig) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data)).convert("L")
    except Exception as exc:
        raise InputError(f"could not decode PNG mask: {exc}") from exc
    arr = np.asarray(img, dtype=np.uint8)
    if arr.shape != (cfg.image_h, cfg.image_w):
        raise InputError(f"expected {cfg.image_h}x{cfg.image_w} mask, got {arr.shape}")
    return (arr >= 128).astype(np.uint8)
