"""Synthetic shapes world: scenes, patch-aligned renders, captions, shards.

Scenes are composed of patch-aligned uniform-color objects (squares, discs,
horizontal bars) over a plain background, so every render tokenizes and
detokenizes exactly. Captions and edit instructions come from a fixed
grammar over the shared 64-word vocabulary; attribute words fully determine
the asserted scene, which keeps every score analytic.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from . import vocab
from .errors import InputError
from .rng import STREAM_SCENE, make_rng
from .tokenizer import TokenizerConfig, decode_tokens, image_to_png, mask_to_png, png_to_image, png_to_mask

EDIT_OPS = ["recolor", "add", "remove", "replace"]

# per-shape admissible size parameters (squares: side, circles: radius, bars: length)
SHAPE_SIZES = {"square": [2, 3, 4], "circle": [1, 2], "bar": [3, 4, 5]}


@dataclass
class ObjectSpec:
    shape: str   # square | circle | bar
    color: str   # one of vocab.OBJECT_COLORS
    row: int     # anchor cell (top-left for square/bar, center for circle)
    col: int
    size: int

    def to_json(self) -> dict:
        return {"shape": self.shape, "color": self.color,
                "row": self.row, "col": self.col, "size": self.size}

    @classmethod
    def from_json(cls, obj: dict) -> "ObjectSpec":
        return cls(**obj)


@dataclass
class SceneSpec:
    background: str
    objects: list[ObjectSpec] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"background": self.background,
                "objects": [o.to_json() for o in self.objects]}

    @classmethod
    def from_json(cls, obj: dict) -> "SceneSpec":
        return cls(background=obj["background"],
                   objects=[ObjectSpec.from_json(o) for o in obj["objects"]])


def footprint(obj: ObjectSpec, rows: int, cols: int) -> np.ndarray:
    """Grid cells the object covers, as raster indices."""
    cells = []
    if obj.shape == "square":
        for r in range(obj.row, obj.row + obj.size):
            for c in range(obj.col, obj.col + obj.size):
                cells.append((r, c))
    elif obj.shape == "bar":
        for c in range(obj.col, obj.col + obj.size):
            cells.append((obj.row, c))
    elif obj.shape == "circle":
        k = obj.size
        for dr in range(-k, k + 1):
            for dc in range(-k, k + 1):
                if dr * dr + dc * dc <= k * k:
                    cells.append((obj.row + dr, obj.col + dc))
    else:
        raise InputError(f"unknown shape {obj.shape!r}")
    out = [r * cols + c for r, c in cells]
    if any(r < 0 or r >= rows or c < 0 or c >= cols for r, c in cells):
        raise InputError(f"object {obj} exceeds the {rows}x{cols} grid")
    return np.array(sorted(out), dtype=np.int64)


def render_scene(scene: SceneSpec, cfg: TokenizerConfig) -> np.ndarray:
    """Paint the scene as patch-aligned uniform palette colors."""
    grid = np.full(cfg.grid_tokens, vocab.COLOR_TOKEN_ID[scene.background], dtype=np.int64)
    for obj in scene.objects:
        grid[footprint(obj, cfg.rows, cfg.cols)] = vocab.COLOR_TOKEN_ID[obj.color]
    from .tokenizer import TokenGrid
    return decode_tokens(TokenGrid(grid, cfg.rows, cfg.cols), cfg)


def caption_for_scene(scene: SceneSpec) -> str:
    parts = []
    for obj in scene.objects:
        parts += [obj.color, obj.shape, f"s{obj.size}", f"r{obj.row}", f"c{obj.col}"]
    parts += ["on", scene.background]
    return " ".join(parts)


def _valid_anchors(shape: str, size: int, rows: int, cols: int) -> list[tuple[int, int]]:
    anchors = []
    for r in range(rows):
        for c in range(cols):
            try:
                footprint(ObjectSpec(shape, "red", r, c, size), rows, cols)
            except InputError:
                continue
            anchors.append((r, c))
    return anchors


def _sample_object(rng: np.random.Generator, cfg: TokenizerConfig,
                   occupied: np.ndarray, colors_in_use: set[str]) -> ObjectSpec | None:
    """Rejection-sample an object that fits and does not overlap ``occupied``."""
    for _ in range(64):
        shape = str(rng.choice(["square", "circle", "bar"]))
        size = int(rng.choice(SHAPE_SIZES[shape]))
        anchors = _valid_anchors(shape, size, cfg.rows, cfg.cols)
        if not anchors:
            continue
        r, c = anchors[rng.integers(0, len(anchors))]
        color = str(rng.choice([c_ for c_ in vocab.OBJECT_COLORS if c_ not in colors_in_use]))
        obj = ObjectSpec(shape, color, r, c, size)
        if not occupied[footprint(obj, cfg.rows, cfg.cols)].any():
            return obj
    return None


def sample_scene(rng: np.random.Generator, cfg: TokenizerConfig,
                 n_objects: int | None = None) -> SceneSpec:
    background = str(rng.choice(vocab.BACKGROUND_COLORS))
    if n_objects is None:
        n_objects = int(rng.integers(1, 3))  # 1 or 2
    scene = SceneSpec(background=background)
    occupied = np.zeros(cfg.grid_tokens, dtype=bool)
    for _ in range(n_objects):
        obj = _sample_object(rng, cfg, occupied, {o.color for o in scene.objects})
        if obj is None:
            break
        occupied[footprint(obj, cfg.rows, cfg.cols)] = True
        scene.objects.append(obj)
    return scene


@dataclass
class EditTriple:
    source: SceneSpec
    target: SceneSpec
    op: str
    instruction: str
    mask_pixels: np.ndarray  # exact changed region

    def coverage(self, cfg: TokenizerConfig) -> int:
        from .tokenizer import patchify_mask
        return int(patchify_mask(self.mask_pixels, cfg).patch.sum())


def _instruction(op: str, obj: ObjectSpec) -> str:
    if op == "recolor":
        return f"recolor the {obj.shape} to {obj.color}"
    if op == "add":
        return f"add a {obj.color} {obj.shape}"
    if op == "remove":
        return f"remove the {obj.shape}"
    if op == "replace":
        return f"replace with a {obj.color} {obj.shape}"
    raise InputError(f"unknown edit op {op!r}")


def sample_edit_triple(rng: np.random.Generator, cfg: TokenizerConfig,
                       op: str | None = None) -> EditTriple:
    """A (source, instruction, target, mask) tuple; the mask is the exact
    pixel diff, non-empty by construction."""
    if op is None:
        op = EDIT_OPS[rng.integers(0, 4)]
    while True:
        if op == "add":
            source = sample_scene(rng, cfg, n_objects=1)
        else:
            source = sample_scene(rng, cfg, n_objects=int(rng.integers(1, 3)))
        if not source.objects:
            continue
        target = SceneSpec(source.background, [ObjectSpec(**o.to_json()) for o in source.objects])
        idx = int(rng.integers(0, len(target.objects)))
        used = {o.color for o in target.objects}
        if op == "recolor":
            new_color = str(rng.choice([c for c in vocab.OBJECT_COLORS if c not in used]))
            target.objects[idx].color = new_color
            described = target.objects[idx]
        elif op == "remove":
            described = target.objects.pop(idx)
        elif op == "add":
            occupied = np.zeros(cfg.grid_tokens, dtype=bool)
            for o in target.objects:
                occupied[footprint(o, cfg.rows, cfg.cols)] = True
            new_obj = _sample_object(rng, cfg, occupied, used)
            if new_obj is None:
                continue
            target.objects.append(new_obj)
            described = new_obj
        else:  # replace
            occupied = np.zeros(cfg.grid_tokens, dtype=bool)
            for i, o in enumerate(target.objects):
                if i != idx:
                    occupied[footprint(o, cfg.rows, cfg.cols)] = True
            new_obj = _sample_object(rng, cfg, occupied, used)
            if new_obj is None:
                continue
            target.objects[idx] = new_obj
            described = new_obj
        src_img = render_scene(source, cfg)
        tgt_img = render_scene(target, cfg)
        mask = (src_img != tgt_img).any(axis=2).astype(np.uint8)
        if mask.sum() == 0:
            continue
        return EditTriple(source=source, target=target, op=op,
                          instruction=_instruction(op, described), mask_pixels=mask)


# --- shards -------------------------------------------------------------------

def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def iter_records(kind: str, count: int, seed: int, cfg: TokenizerConfig):
    """Seed-deterministic record stream for a shard."""
    if kind not in ("t2i", "edit"):
        raise InputError(f"unknown dataset kind {kind!r}")
    if count < 1:
        raise InputError("count must be >= 1")
    rng = make_rng(seed, STREAM_SCENE)
    for _ in range(count):
        if kind == "t2i":
            scene = sample_scene(rng, cfg)
            img = render_scene(scene, cfg)
            yield {"caption": caption_for_scene(scene), "image": _b64(image_to_png(img))}
        else:
            triple = sample_edit_triple(rng, cfg)
            yield {"instruction": triple.instruction,
                   "source": _b64(image_to_png(render_scene(triple.source, cfg))),
                   "target": _b64(image_to_png(render_scene(triple.target, cfg))),
                   "mask": _b64(mask_to_png(triple.mask_pixels)),
                   "op": triple.op,
                   "scene": triple.source.to_json()}


def make_dataset(kind: str, count: int, seed: int, path: str,
                 cfg: TokenizerConfig | None = None) -> str:
    cfg = cfg or TokenizerConfig()
    with open(path, "w") as fh:
        for record in iter_records(kind, count, seed, cfg):
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def load_shard(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def decode_t2i_record(record: dict, cfg: TokenizerConfig) -> tuple[str, np.ndarray]:
    return record["caption"], png_to_image(base64.b64decode(record["image"]), cfg)


def decode_edit_record(record: dict, cfg: TokenizerConfig) -> dict:
    return {
        "instruction": record["instruction"],
        "source": png_to_image(base64.b64decode(record["source"]), cfg),
        "target": png_to_image(base64.b64decode(record["target"]), cfg),
        "mask": png_to_mask(base64.b64decode(record["mask"]), cfg),
        "op": record["op"],
    }
