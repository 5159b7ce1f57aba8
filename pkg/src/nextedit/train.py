"""Two-stage training: any-order text-to-image pretraining, then editing
fine-tune with the two mask-selector embeddings.

Stage 1 draws a fresh generation order per sample (identity with
probability ``raster_prob`` so the raster skill keeps being rehearsed).
Stage 2 mixes three sample kinds: masked edit triples (loss only on masked
positions), unmasked triples (full-raster fallback), and caption-repair
samples synthesized from text-image pairs by corrupting a few grid cells,
which aligns the editing pathway with refinement-time prompts.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt
from .data import decode_edit_record, decode_t2i_record
from .errors import ConfigError, InputError, TrainingDiverged
from .model import ImageTokenModel, ModelConfig
from .nn import AdamW, OptimizerConfig
from .rng import STREAM_DATA, STREAM_ORDER, make_rng
from .sequence import TextTokens, build_edit_layout, build_pretrain_layout, sample_order
from .tokenizer import (EditMask, TokenGrid, TokenizerConfig, encode_image,
                        mask_from_patches, patchify_mask)
from .vocab import PAD


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 24
    lr: float = 1e-4            # constant over the run
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.0
    seed: int = 0
    raster_prob: float = 0.1
    edit_mix_fraction: float = 0.5   # masked share among edit triples
    repair_fraction: float = 0.25    # caption-repair share of stage-2 batches
    text_dropout: float = 0.1        # unconditional rehearsal (guidance support)
    eval_every: int = 100
    freeze_trunk: bool = False       # stage 2: update only the selector pair

    def __post_init__(self) -> None:
        if not 0.0 <= self.edit_mix_fraction <= 1.0:
            raise ConfigError("edit_mix_fraction must lie in [0, 1]")
        if not 0.0 <= self.repair_fraction <= 1.0:
            raise ConfigError("repair_fraction must lie in [0, 1]")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                               weight_decay=self.weight_decay)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class T2ISample:
    text: TextTokens
    grid: TokenGrid


@dataclass
class EditSample:
    text: TextTokens
    source: TokenGrid
    target: TokenGrid
    mask: EditMask | None


@dataclass
class RunLog:
    header: dict
    rows: list[dict] = field(default_factory=list)

    def append(self, step: int, loss: float, lr: float, elapsed_ms: float) -> None:
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
        self.rows.append({"step": step, "loss": loss, "lr": lr,
                          "elapsed_ms": round(elapsed_ms, 3)})

    def write(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.header, sort_keys=True) + "\n")
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def t2i_samples_from_records(records: list[dict], tok_cfg: TokenizerConfig,
                             text_len: int) -> list[T2ISample]:
    out = []
    for rec in records:
        caption, img = decode_t2i_record(rec, tok_cfg)
        out.append(T2ISample(TextTokens.encode(caption, text_len),
                             encode_image(img, tok_cfg)))
    return out


def edit_samples_from_records(records: list[dict], tok_cfg: TokenizerConfig,
                              text_len: int) -> list[EditSample]:
    out = []
    for rec in records:
        sample = decode_edit_record(rec, tok_cfg)
        out.append(EditSample(TextTokens.encode(sample["instruction"], text_len),
                              encode_image(sample["source"], tok_cfg),
                              encode_image(sample["target"], tok_cfg),
                              patchify_mask(sample["mask"], tok_cfg)))
    return out


def _maybe_drop_text(text: TextTokens, rng: np.random.Generator, p: float) -> TextTokens:
    if p > 0 and rng.random() < p:
        return TextTokens(np.full(len(text), PAD, dtype=np.int64))
    return text


def pretrain_step(model: ImageTokenModel, opt: AdamW, batch: list[T2ISample],
                  rng: np.random.Generator, raster_prob: float,
                  text_dropout: float = 0.0) -> float:
    """One any-order training step; fresh order per sample."""
    if not batch:
        raise InputError("empty batch")
    layouts = []
    for sample in batch:
        order = sample_order(sample.grid.ids.shape[0], rng, raster_prob)
        text = _maybe_drop_text(sample.text, rng, text_dropout)
        layouts.append(build_pretrain_layout(text, sample.grid, order))
    _, loss, _ = model.forward_train_batch(layouts)
    value = float(loss.item())
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite pretraining loss {value}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def raster_step(model: ImageTokenModel, opt: AdamW, batch: list[T2ISample],
                rng: np.random.Generator, text_dropout: float = 0.0) -> float:
    """Raster-only control step (the next-token baseline trainer)."""
    layouts = []
    for sample in batch:
        from .sequence import build_raster_layout
        text = _maybe_drop_text(sample.text, rng, text_dropout)
        layouts.append(build_raster_layout(text, sample.grid))
    _, loss, _ = model.forward_train_batch(layouts)
    value = float(loss.item())
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite raster loss {value}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def finetune_edit_step(model: ImageTokenModel, opt: AdamW, batch: list[EditSample],
                       rng: np.random.Generator, text_dropout: float = 0.0) -> float:
    """One editing step: masked samples train only their masked positions,
    unmasked samples train the full raster fallback."""
    if not model.cfg.edit_tokens:
        raise ConfigError("fine-tuning requires a model with the edit-selector pair")
    layouts = []
    for sample in batch:
        text = _maybe_drop_text(sample.text, rng, text_dropout)
        layouts.append(build_edit_layout(text, sample.source, sample.mask,
                                         targets=sample.target))
    _, loss, _ = model.forward_train_batch(layouts)
    value = float(loss.item())
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite editing loss {value}")
    opt.zero_grad()
    loss.backward()
    opt.step()
    return value


def make_repair_sample(sample: T2ISample, rng: np.random.Generator,
                       tok_cfg: TokenizerConfig, max_cells: int | None = None) -> EditSample:
    """Corrupt a few grid cells of a clean render; the mask marks exactly the
    corrupted cells and the target restores them."""
    length = sample.grid.ids.shape[0]
    max_cells = max_cells or max(1, length // 4)
    k = int(rng.integers(1, max_cells + 1))
    positions = rng.choice(length, size=k, replace=False)
    corrupted = sample.grid.ids.copy()
    corrupted[positions] = rng.integers(0, tok_cfg.vocab, size=k)
    patch = np.zeros(length, dtype=np.uint8)
    patch[positions] = 1
    return EditSample(text=sample.text,
                      source=TokenGrid(corrupted, sample.grid.rows, sample.grid.cols),
                      target=sample.grid,
                      mask=mask_from_patches(patch, tok_cfg))


def _freeze_trunk(model: ImageTokenModel) -> None:
    for name, p in model.named_parameters():
        p.requires_grad_(name in ("edit_embed", "unedit_embed"))


def _log_header(model: ImageTokenModel, cfg: TrainConfig, stage: str) -> dict:
    from .model import count_params
    config = {"stage": stage, "train": cfg.to_json(), "model": model.cfg.to_json()}
    return {"config_hash": ckpt.config_hash(config), "params": count_params(model),
            "stage": stage}


def train_t2i(model: ImageTokenModel, samples: list[T2ISample], cfg: TrainConfig,
              log_path: str | None = None) -> RunLog:
    """Stage-1 pretraining loop over text-image pairs."""
    opt = AdamW(dict(model.named_parameters()), cfg.optimizer())
    rng_data = make_rng(cfg.seed, STREAM_DATA)
    rng_order = make_rng(cfg.seed, STREAM_ORDER)
    log = RunLog(_log_header(model, cfg, "t2i"))
    start = time.monotonic()
    for step in range(1, cfg.steps + 1):
        idx = rng_data.integers(0, len(samples), size=cfg.batch_size)
        batch = [samples[i] for i in idx]
        loss = pretrain_step(model, opt, batch, rng_order, cfg.raster_prob,
                             cfg.text_dropout)
        log.append(step, loss, cfg.lr, (time.monotonic() - start) * 1e3)
    if log_path:
        log.write(log_path)
    return log


def train_edit(model: ImageTokenModel, edit_samples: list[EditSample],
               repair_pool: list[T2ISample], cfg: TrainConfig,
               tok_cfg: TokenizerConfig, log_path: str | None = None) -> RunLog:
    """Stage-2 fine-tune mixing masked edits, full-raster fallbacks, and
    caption-repair samples drawn from ``repair_pool``."""
    if cfg.freeze_trunk:
        _freeze_trunk(model)
    opt = AdamW(dict(model.named_parameters()), cfg.optimizer())
    rng_data = make_rng(cfg.seed, STREAM_DATA)
    rng_order = make_rng(cfg.seed, STREAM_ORDER)
    log = RunLog(_log_header(model, cfg, "edit"))
    start = time.monotonic()
    for step in range(1, cfg.steps + 1):
        batch: list[EditSample] = []
        for _ in range(cfg.batch_size):
            if repair_pool and rng_data.random() < cfg.repair_fraction:
                pick = repair_pool[int(rng_data.integers(0, len(repair_pool)))]
                batch.append(make_repair_sample(pick, rng_data, tok_cfg))
                continue
            sample = edit_samples[int(rng_data.integers(0, len(edit_samples)))]
            if rng_data.random() < cfg.edit_mix_fraction:
                batch.append(sample)
            else:
                batch.append(EditSample(sample.text, sample.source, sample.target, mask=None))
        loss = finetune_edit_step(model, opt, batch, rng_order, cfg.text_dropout)
        log.append(step, loss, cfg.lr, (time.monotonic() - start) * 1e3)
    if log_path:
        log.write(log_path)
    return log


def extend_for_editing(stage1: ImageTokenModel, seed: int = 0) -> ImageTokenModel:
    """Stage-2 initialization: same trunk, plus the two selector embeddings."""
    if stage1.cfg.edit_tokens:
        raise ConfigError("model already carries the edit-selector pair")
    cfg2 = ModelConfig(**{**stage1.cfg.to_json(), "edit_tokens": True})
    stage2 = ImageTokenModel(cfg2, seed=seed)
    shared = dict(stage1.named_parameters())
    with torch.no_grad():
        for name, p in stage2.named_parameters():
            if name in shared:
                p.copy_(shared[name])
    return stage2


@torch.no_grad()
def eval_loss(model: ImageTokenModel, layouts_fn, n_batches: int, batch_size: int) -> float:
    """Mean loss over freshly built evaluation batches (no updates)."""
    losses = []
    for b in range(n_batches):
        layouts = layouts_fn(b, batch_size)
        _, loss, _ = model.forward_train_batch(layouts)
        losses.append(float(loss.item()))
    return float(np.mean(losses))


# --- checkpoints ----------------------------------------------------------------

def save_checkpoint(path: str, model: ImageTokenModel, tok_cfg: TokenizerConfig,
                    meta: dict | None = None) -> str:
    config = {"kind": "model", "model": model.cfg.to_json(),
              "tokenizer": tok_cfg.to_json(), "meta": meta or {}}
    return ckpt.write_container(path, config, ckpt.state_tensors(model))


def load_checkpoint(path: str) -> tuple[ImageTokenModel, TokenizerConfig, dict, str]:
    config, tensors, digest = ckpt.read_container(path)
    if config.get("kind") != "model":
        raise ckpt.CorruptionError(f"checkpoint kind {config.get('kind')!r} is not a model")
    model = ImageTokenModel(ModelConfig.from_json(config["model"]), seed=0)
    ckpt.load_state(model, tensors)
    tok_cfg = TokenizerConfig.from_json(config["tokenizer"])
    return model, tok_cfg, config.get("meta", {}), digest
