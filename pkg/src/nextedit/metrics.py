"""Evaluation metrics over analytic proxy features.

Image features are per-quadrant palette histograms plus shape-occupancy
counts recovered from connected components of the token grid; text
features are bags of words. Directional scores project both modalities
into a shared keyword-indicator space (colors, shapes, rows, cols).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab
from .errors import InputError, UndefinedSimilarityError
from .tokenizer import TokenizerConfig, encode_image

EIG_CLAMP = 1e-10
SHAPE_CLASSES = ["square", "circle", "bar", "other"]


def pixel_metrics(a: np.ndarray, b: np.ndarray) -> dict[str, float]:
    """Mean absolute / mean squared RGB difference, normalized to [0, 1]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = (a.astype(np.float64) - b.astype(np.float64)) / 255.0
    return {"l1": float(np.abs(diff).mean()), "l2": float((diff ** 2).mean())}


def _components(grid2d: np.ndarray, background: int) -> list[np.ndarray]:
    """4-connected components of non-background cells; each as (r, c) arrays."""
    rows, cols = grid2d.shape
    seen = np.zeros_like(grid2d, dtype=bool)
    comps = []
    for r in range(rows):
        for c in range(cols):
            if seen[r, c] or grid2d[r, c] == background:
                continue
            color = grid2d[r, c]
            stack = [(r, c)]
            cells = []
            seen[r, c] = True
            while stack:
                y, x = stack.pop()
                cells.append((y, x))
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < rows and 0 <= nx < cols and not seen[ny, nx] \
                            and grid2d[ny, nx] == color:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            comps.append(np.array(cells))
    return comps


def classify_component(cells: np.ndarray) -> str:
    """Square: filled square bbox; bar: 1-cell-thick run; circle: anything
    round-ish (non-filled bbox); single cells and other leftovers are 'other'."""
    rs, cs = cells[:, 0], cells[:, 1]
    h = rs.max() - rs.min() + 1
    w = cs.max() - cs.min() + 1
    filled = len(cells) == h * w
    if filled and h == w and h >= 2:
        return "square"
    if filled and (h == 1 or w == 1):
        return "bar" if len(cells) >= 2 else "other"
    if not filled and h == w:
        return "circle"
    return "other"


def image_features(img: np.ndarray, cfg: TokenizerConfig) -> np.ndarray:
    """Per-quadrant palette histograms (4 x vocab) + shape occupancy (4)."""
    grid = encode_image(img, cfg).as_2d()
    half_r, half_c = cfg.rows // 2, cfg.cols // 2
    hists = []
    for qr in range(2):
        for qc in range(2):
            quad = grid[qr * half_r:(qr + 1) * half_r, qc * half_c:(qc + 1) * half_c]
            hists.append(np.bincount(quad.reshape(-1), minlength=cfg.vocab))
    background = int(np.bincount(grid.reshape(-1)).argmax())
    occupancy = dict.fromkeys(SHAPE_CLASSES, 0)
    for comp in _components(grid, background):
        occupancy[classify_component(comp)] += len(comp)
    feats = np.concatenate(hists + [np.array([occupancy[s] for s in SHAPE_CLASSES])])
    return feats.astype(np.float64)


def text_features(text: str) -> np.ndarray:
    """Bag-of-words counts over the shared vocabulary."""
    counts = np.zeros(len(vocab.WORDS), dtype=np.float64)
    for wid in vocab.encode_words(text):
        counts[wid] += 1
    return counts


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise UndefinedSimilarityError("cosine of a zero feature vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def feature_similarity(a: np.ndarray, b: np.ndarray, cfg: TokenizerConfig) -> float:
    """Cosine similarity of image proxy features."""
    return cosine(image_features(a, cfg), image_features(b, cfg))


# --- keyword-indicator space ---------------------------------------------------

KEYWORDS = vocab.COLORS + vocab.SHAPES + vocab.ROWS + vocab.COLS
_KEYWORD_INDEX = {w: i for i, w in enumerate(KEYWORDS)}


def caption_indicator(text: str) -> np.ndarray:
    vec = np.zeros(len(KEYWORDS), dtype=np.float64)
    for word in text.split():
        if word in _KEYWORD_INDEX:
            vec[_KEYWORD_INDEX[word]] = 1.0
    return vec


def image_indicator(img: np.ndarray, cfg: TokenizerConfig) -> np.ndarray:
    """Which named colors, detected shapes, and occupied rows/cols appear."""
    grid = encode_image(img, cfg).as_2d()
    vec = np.zeros(len(KEYWORDS), dtype=np.float64)
    present = set(int(t) for t in np.unique(grid))
    for tid in present:
        name = vocab.TOKEN_ID_COLOR.get(tid)
        if name is not None:
            vec[_KEYWORD_INDEX[name]] = 1.0
    background = int(np.bincount(grid.reshape(-1)).argmax())
    for comp in _components(grid, background):
        cls = classify_component(comp)
        if cls in _KEYWORD_INDEX:
            vec[_KEYWORD_INDEX[cls]] = 1.0
        for r in np.unique(comp[:, 0]):
            vec[_KEYWORD_INDEX[f"r{r}"]] = 1.0
        for c in np.unique(comp[:, 1]):
            vec[_KEYWORD_INDEX[f"c{c}"]] = 1.0
    return vec


@dataclass
class DirectionalReport:
    dir_sim: float | None  # None when either delta vector is zero
    out_sim: float


def directional_metrics(src_img: np.ndarray, out_img: np.ndarray,
                        src_cap: str, tgt_cap: str, cfg: TokenizerConfig) -> DirectionalReport:
    """Edit-direction agreement between image deltas and caption deltas."""
    img_delta = image_indicator(out_img, cfg) - image_indicator(src_img, cfg)
    cap_delta = caption_indicator(tgt_cap) - caption_indicator(src_cap)
    out_sim = cosine(image_indicator(out_img, cfg), caption_indicator(tgt_cap))
    if np.linalg.norm(img_delta) == 0 or np.linalg.norm(cap_delta) == 0:
        return DirectionalReport(dir_sim=None, out_sim=out_sim)
    return DirectionalReport(dir_sim=cosine(img_delta, cap_delta), out_sim=out_sim)


# --- Frechet distance ----------------------------------------------------------

@dataclass
class FrechetStats:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "FrechetStats":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise InputError("need at least 2 feature rows per set")
        return cls(mean=feats.mean(axis=0), cov=np.atleast_2d(np.cov(feats, rowvar=False)))


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root with eigenvalues below the clamp zeroed."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.where(vals < EIG_CLAMP, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The cross term is evaluated as sqrtm(sqrtm(S_a) S_b sqrtm(S_a)), which is
    symmetric PSD and shares its trace with (S_a S_b)^{1/2}.
    """
    sa = FrechetStats.from_features(feats_a)
    sb = FrechetStats.from_features(feats_b)
    diff = sa.mean - sb.mean
    root_a = _sqrtm_psd(sa.cov)
    cross = _sqrtm_psd(root_a @ sb.cov @ root_a)
    value = float(diff @ diff + np.trace(sa.cov) + np.trace(sb.cov) - 2.0 * np.trace(cross))
    return max(value, 0.0)
