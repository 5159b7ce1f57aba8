"""Caption-conditioned quality critic and its analytic oracle.

The oracle score of an image under a caption is the fraction of asserted
facts that hold in the render: one fact per described object (its exact
footprint painted in its color) plus one for the background. The critic is
a small convolutional net regressing that score from pixels, with the
caption injected as broadcast bag-of-words channels; its last feature map
is one cell per token so saliency maps align with the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import checkpoint as ckpt
from . import vocab
from .data import ObjectSpec, footprint
from .errors import ConfigError, InputError
from .nn import AdamW, OptimizerConfig
from .rng import STREAM_DATA, STREAM_INIT, make_rng
from .tokenizer import TokenizerConfig, encode_image


def parse_caption(caption: str) -> tuple[list[ObjectSpec], str]:
    """Invert the caption grammar: groups of (color shape size row col), then
    'on <background>'."""
    words = caption.split()
    if len(words) < 2 or words[-2] != "on" or words[-1] not in vocab.BACKGROUND_COLORS:
        raise InputError(f"caption does not end with a background clause: {caption!r}")
    body, background = words[:-2], words[-1]
    if len(body) % 5 != 0:
        raise InputError(f"malformed caption body: {caption!r}")
    objects = []
    for i in range(0, len(body), 5):
        color, shape, size, row, col = body[i:i + 5]
        if color not in vocab.OBJECT_COLORS or shape not in vocab.SHAPES:
            raise InputError(f"bad object clause in caption: {caption!r}")
        objects.append(ObjectSpec(shape=shape, color=color,
                                  row=int(row[1:]), col=int(col[1:]), size=int(size[1:])))
    return objects, background


def scene_match_score(image: np.ndarray, caption: str, tok_cfg: TokenizerConfig) -> float:
    """Fraction of caption-asserted facts true in the image, in [0, 1]."""
    objects, background = parse_caption(caption)
    grid = encode_image(image, tok_cfg).ids
    asserted = np.zeros(tok_cfg.grid_tokens, dtype=bool)
    true_facts = 0
    for obj in objects:
        cells = footprint(obj, tok_cfg.rows, tok_cfg.cols)
        asserted[cells] = True
        if np.all(grid[cells] == vocab.COLOR_TOKEN_ID[obj.color]):
            true_facts += 1
    bg_ok = np.all(grid[~asserted] == vocab.COLOR_TOKEN_ID[background])
    return (true_facts + int(bg_ok)) / (len(objects) + 1)


def bag_of_words(caption: str) -> np.ndarray:
    counts = np.zeros(len(vocab.WORDS), dtype=np.float32)
    for wid in vocab.encode_words(caption):
        counts[wid] += 1.0
    return counts


@dataclass
class CriticConfig:
    channels: int = 32
    text_channels: int = 8
    v_txt: int = 64
    image_h: int = 32
    image_w: int = 32
    patch: int = 4

    def __post_init__(self) -> None:
        downs = math.log2(self.patch)
        if downs != int(downs):
            raise ConfigError("patch size must be a power of two for grid alignment")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "CriticConfig":
        return cls(**obj)


class Critic(nn.Module):
    """Conv trunk -> grid-aligned feature map -> pooled score in [0, 1]."""

    def __init__(self, cfg: CriticConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.text_proj = nn.Linear(cfg.v_txt, cfg.text_channels, bias=False)
        self.conv_in = nn.Conv2d(3 + cfg.text_channels, c, 3, padding=1)
        self.downs = nn.ModuleList([nn.Conv2d(c, c, 3, stride=2, padding=1)
                                    for _ in range(int(math.log2(cfg.patch)))])
        self.head = nn.Linear(c, 1)
        g = make_rng(seed, STREAM_INIT)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.from_numpy(g.normal(0, 0.05, size=tuple(p.shape)).astype(np.float32)))

    def features(self, image: np.ndarray, caption: str) -> torch.Tensor:
        """Grid-aligned feature map A of shape [C, rows, cols]."""
        return self.features_batch(
            torch.from_numpy(np.asarray(image, dtype=np.float32) / 255.0).permute(2, 0, 1).unsqueeze(0),
            torch.from_numpy(bag_of_words(caption)).unsqueeze(0))[0]

    def features_batch(self, images: torch.Tensor, bows: torch.Tensor) -> torch.Tensor:
        b, _, h, w = images.shape
        t = self.text_proj(bows)[:, :, None, None].expand(-1, -1, h, w)
        x = F.relu(self.conv_in(torch.cat([images, t], dim=1)))
        for down in self.downs:
            x = F.relu(down(x))
        return x

    def score_from_features(self, feats: torch.Tensor) -> torch.Tensor:
        pooled = feats.mean(dim=(-2, -1))
        return torch.sigmoid(self.head(pooled)).squeeze(-1)

    @torch.no_grad()
    def score(self, image: np.ndarray, caption: str) -> float:
        return float(self.score_from_features(self.features(image, caption).unsqueeze(0))[0])


def train_critic(pool: list[tuple[str, np.ndarray]], tok_cfg: TokenizerConfig,
                 cfg: CriticConfig | None = None, steps: int = 1200, batch_size: int = 32,
                 lr: float = 1e-3, seed: int = 0) -> Critic:
    """Regress the oracle score on corrupted/mismatched variants of clean
    (caption, image) pairs."""
    from .tokenizer import TokenGrid, decode_tokens
    cfg = cfg or CriticConfig(image_h=tok_cfg.image_h, image_w=tok_cfg.image_w,
                              patch=tok_cfg.patch)
    critic = Critic(cfg, seed=seed)
    opt = AdamW(dict(critic.named_parameters()), OptimizerConfig(lr=lr))
    rng = make_rng(seed, STREAM_DATA)
    length = tok_cfg.grid_tokens
    corruption_levels = [0, 0, max(1, length // 16), length // 8, length // 4,
                         length // 2, length]
    for _ in range(steps):
        images = np.zeros((batch_size, tok_cfg.image_h, tok_cfg.image_w, 3), dtype=np.float32)
        bows = np.zeros((batch_size, cfg.v_txt), dtype=np.float32)
        targets = np.zeros(batch_size, dtype=np.float32)
        for b in range(batch_size):
            caption, clean = pool[int(rng.integers(0, len(pool)))]
            if rng.random() < 0.15:
                # mismatched caption: score the image against another sample's text
                caption = pool[int(rng.integers(0, len(pool)))][0]
                img = clean
            else:
                k = int(corruption_levels[rng.integers(0, len(corruption_levels))])
                if k == 0:
                    img = clean
                else:
                    ids = encode_image(clean, tok_cfg).ids.copy()
                    cells = rng.choice(length, size=min(k, length), replace=False)
                    ids[cells] = rng.integers(0, tok_cfg.vocab, size=len(cells))
                    img = decode_tokens(TokenGrid(ids, tok_cfg.rows, tok_cfg.cols), tok_cfg)
            images[b] = img / 255.0
            bows[b] = bag_of_words(caption)
            targets[b] = scene_match_score(img, caption, tok_cfg)
        feats = critic.features_batch(torch.from_numpy(images).permute(0, 3, 1, 2),
                                      torch.from_numpy(bows))
        pred = critic.score_from_features(feats)
        loss = ((pred - torch.from_numpy(targets)) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return critic


def save_critic(path: str, critic: Critic, meta: dict | None = None) -> str:
    config = {"kind": "critic", "critic": critic.cfg.to_json(), "meta": meta or {}}
    return ckpt.write_container(path, config, ckpt.state_tensors(critic))


def load_critic(path: str) -> tuple[Critic, dict, str]:
    config, tensors, digest = ckpt.read_container(path)
    if config.get("kind") != "critic":
        raise ckpt.CorruptionError(f"checkpoint kind {config.get('kind')!r} is not a critic")
    critic = Critic(CriticConfig.from_json(config["critic"]), seed=0)
    ckpt.load_state(critic, tensors)
    return critic, config.get("meta", {}), digest
