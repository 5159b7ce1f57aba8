"""Decoder-only transformer over image tokens with order-aware inputs.

The model reads a condition prefix (text, optionally source tokens and
mask selectors) and then one input slot per generation step. The input at
step ``i`` is the embedding of the previously written token (a learned
start embedding at step 0) plus the positional embedding of the position
about to be written, so any generation order is expressible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import rng as rngmod
from .errors import ConfigError, LayoutError
from .nn import DecoderBlock, LayerCache, cross_entropy, rms_norm
from .sequence import SequenceLayout, TAG_MASK, TAG_SOURCE, TAG_TEXT
from .vocab import PAD

INIT_STD = 0.02


@dataclass
class ModelConfig:
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    ffn_dim: int = 512
    v_img: int = 64
    v_txt: int = 64
    grid_tokens: int = 64
    text_len: int = 16
    random_order: bool = True   # order-PE table + start embedding
    edit_tokens: bool = False   # edit/non-edit selector pair (stage 2)

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


@dataclass
class SamplerConfig:
    temperature: float = 1.0
    top_k: int = 64
    greedy: bool = False
    guidance_scale: float = 0.0  # 0 disables the unconditional mix

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1: got {self.top_k}")
        if not self.greedy and self.temperature <= 0:
            raise ConfigError("temperature must be positive for stochastic sampling")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def sample_token(logits: np.ndarray, sampler: SamplerConfig, rng: np.random.Generator) -> int:
    """Draw one token id. Greedy picks the argmax (lowest id on ties);
    otherwise softmax(logits / temperature) restricted to the top_k logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if sampler.greedy:
        return int(np.argmax(logits))
    v = logits.shape[0]
    k = min(sampler.top_k, v)
    # stable ranking: by descending logit, lowest id first among ties
    ranked = np.lexsort((np.arange(v), -logits))[:k]
    z = logits[ranked] / sampler.temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    u = rng.random()
    return int(ranked[np.searchsorted(np.cumsum(p), u, side="right").clip(max=k - 1)])


def log_softmax64(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


@dataclass
class DecodeResult:
    ids: np.ndarray       # one emitted token per generation step
    logprobs: np.ndarray  # full-softmax log-probability of each emitted token

    @property
    def logprob_sum(self) -> float:
        return float(self.logprobs.sum())


class ImageTokenModel(nn.Module):
    """Transformer trunk plus the embedding tables described above."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.text_embed = nn.Embedding(cfg.v_txt, d)
        self.image_embed = nn.Embedding(cfg.v_img, d)
        self.segment_tags = nn.Parameter(torch.zeros(3, d))
        if cfg.random_order:
            self.order_pe = nn.Parameter(torch.zeros(cfg.grid_tokens, d))
            self.start_token = nn.Parameter(torch.zeros(d))
        if cfg.edit_tokens:
            self.edit_embed = nn.Parameter(torch.zeros(d))
            self.unedit_embed = nn.Parameter(torch.zeros(d))
        self.blocks = nn.ModuleList(
            [DecoderBlock(d, cfg.n_heads, cfg.ffn_dim) for _ in range(cfg.n_layers)])
        self.final_gain = nn.Parameter(torch.ones(d))
        self.head = nn.Linear(d, cfg.v_img, bias=False)
        self._init_weights(seed)

    def _init_weights(self, seed: int) -> None:
        """normal(0, 0.02) everywhere except norm gains; Philox-keyed so the
        same seed yields bit-identical parameters on any platform."""
        g = rngmod.make_rng(seed, rngmod.STREAM_INIT)
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("gain"):
                    p.fill_(1.0)
                else:
                    vals = g.normal(0.0, INIT_STD, size=tuple(p.shape))
                    p.copy_(torch.from_numpy(vals.astype(np.float32)))

    # --- embedding assembly -------------------------------------------------

    def _require_order_tables(self) -> None:
        if not self.cfg.random_order:
            raise ConfigError("model was built without order embeddings (random_order=False)")

    def prefix_embeddings(self, layout: SequenceLayout) -> torch.Tensor:
        self._require_order_tables()
        cfg = self.cfg
        if layout.text_len != cfg.text_len:
            raise ConfigError(f"layout text length {layout.text_len} != model {cfg.text_len}")
        parts = [self.text_embed(torch.from_numpy(layout.text_ids)) + self.segment_tags[TAG_TEXT]]
        if layout.source_ids is not None:
            if layout.grid_tokens != cfg.grid_tokens:
                raise ConfigError("layout grid size does not match model")
            if not cfg.edit_tokens:
                raise ConfigError("editing layout requires a model with edit tokens")
            src = self.image_embed(torch.from_numpy(layout.source_ids))
            if layout.source_masked is not None:
                src = torch.where(torch.from_numpy(layout.source_masked).unsqueeze(-1),
                                  self.start_token.expand_as(src), src)
            parts.append(src + self.order_pe + self.segment_tags[TAG_SOURCE])
            sel = torch.from_numpy(layout.mask_selectors)
            mask_emb = torch.where(sel.unsqueeze(-1) != 0,
                                   self.edit_embed.expand(cfg.grid_tokens, -1),
                                   self.unedit_embed.expand(cfg.grid_tokens, -1))
            parts.append(mask_emb + self.order_pe + self.segment_tags[TAG_MASK])
        return torch.cat(parts, dim=0)

    def step_embedding(self, step: int, prev_token: int | None, layout: SequenceLayout) -> torch.Tensor:
        pe = self.order_pe[int(layout.gen_order[step])]
        if step == 0:
            return self.start_token + pe
        assert prev_token is not None
        return self.image_embed.weight[int(prev_token)] + pe

    def _train_inputs(self, layout: SequenceLayout) -> torch.Tensor:
        if layout.teacher_ids is None:
            raise LayoutError("training forward requires teacher tokens")
        prefix = self.prefix_embeddings(layout)
        order = torch.from_numpy(layout.gen_order)
        pe = self.order_pe[order]
        prev = self.image_embed(torch.from_numpy(layout.teacher_ids[:-1]))
        first = (self.start_token + pe[0]).unsqueeze(0)
        steps = torch.cat([first, prev + pe[1:]], dim=0) if len(order) > 1 else first
        return torch.cat([prefix, steps], dim=0)

    # --- forward passes -----------------------------------------------------

    def trunk(self, x: torch.Tensor, caches: list[LayerCache] | None = None) -> torch.Tensor:
        for i, block in enumerate(self.blocks):
            x = block(x, cache=caches[i] if caches is not None else None, causal=True)
        return rms_norm(x, self.final_gain)

    def forward_train_batch(self, layouts: list[SequenceLayout]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Teacher-forced forward over a batch of same-prefix layouts.

        Returns (logits [B, max_steps, V], loss, per_sample_loss [B]); padded
        steps carry zero loss weight.
        """
        prefix_lens = {l.prefix_len for l in layouts}
        if len(prefix_lens) != 1:
            raise LayoutError("batch mixes layouts with different prefix lengths")
        p = prefix_lens.pop()
        steps = [l.n_steps for l in layouts]
        max_n = max(steps)
        if max_n == 0:
            raise LayoutError("batch contains no generation steps")
        d = self.cfg.d_model
        x = torch.zeros(len(layouts), p + max_n, d)
        targets = np.zeros((len(layouts), max_n), dtype=np.int64)
        weights = np.zeros((len(layouts), max_n), dtype=np.float32)
        for b, layout in enumerate(layouts):
            emb = self._train_inputs(layout)
            x[b, : emb.shape[0]] = emb
            targets[b, : layout.n_steps] = layout.teacher_ids
            weights[b, : layout.n_steps] = 1.0
        hidden = self.trunk(x)
        logits = self.head(hidden[:, p:, :])
        flat = logits.reshape(-1, self.cfg.v_img)
        loss = cross_entropy(flat, torch.from_numpy(targets.reshape(-1)),
                             torch.from_numpy(weights.reshape(-1)))
        with torch.no_grad():
            logp = torch.log_softmax(flat.double(), dim=-1)
            nll = -logp[torch.arange(flat.shape[0]), torch.from_numpy(targets.reshape(-1))]
            nll = nll.reshape(len(layouts), max_n) * torch.from_numpy(weights)
            per_sample = nll.sum(dim=1) / torch.from_numpy(weights).sum(dim=1)
        return logits, loss, per_sample

    def forward_train(self, layout: SequenceLayout) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-step logits and mean loss over generated positions only."""
        logits, loss, _ = self.forward_train_batch([layout])
        return logits[0, : layout.n_steps], loss

    # --- decoding -------------------------------------------------------------

    @torch.no_grad()
    def _last_logits_cached(self, new_rows: torch.Tensor, caches: list[LayerCache]) -> np.ndarray:
        hidden = self.trunk(new_rows.unsqueeze(0), caches)
        return self.head(hidden[0, -1]).numpy()

    @torch.no_grad()
    def _last_logits_full(self, rows: list[torch.Tensor]) -> np.ndarray:
        x = torch.stack(rows, dim=0).unsqueeze(0)
        hidden = self.trunk(x, None)
        return self.head(hidden[0, -1]).numpy()

    @torch.no_grad()
    def decode(self, layout: SequenceLayout, sampler: SamplerConfig,
               rng: np.random.Generator, use_cache: bool = True) -> DecodeResult:
        """Emit one token per generation step, deterministically given ``rng``.

        ``use_cache=False`` recomputes the full sequence every step; it exists
        as the oracle the cached path is checked against. When the layout
        carries ``forced_ids`` those steps consume no randomness.
        With ``guidance_scale > 0`` an unconditional (all-PAD text) stream is
        decoded in lockstep and logits are mixed before sampling.
        """
        streams = [layout]
        if sampler.guidance_scale > 0:
            uncond = SequenceLayout(
                text_ids=np.full(layout.text_len, PAD, dtype=np.int64),
                gen_order=layout.gen_order, grid_tokens=layout.grid_tokens,
                source_ids=layout.source_ids, mask_selectors=layout.mask_selectors,
                source_masked=layout.source_masked)
            streams.append(uncond)

        n = layout.n_steps
        if n == 0:
            return DecodeResult(ids=np.zeros(0, dtype=np.int64), logprobs=np.zeros(0))
        forced = layout.forced_ids if layout.forced_ids is not None else np.zeros(0, dtype=np.int64)
        ids = np.zeros(n, dtype=np.int64)
        logprobs = np.zeros(n, dtype=np.float64)
        caches = [[LayerCache() for _ in self.blocks] for _ in streams] if use_cache else None
        histories: list[list[torch.Tensor]] = [[] for _ in streams]

        per_stream_logits: list[np.ndarray] = [np.zeros(self.cfg.v_img)] * len(streams)
        for s, stream_layout in enumerate(streams):
            prefix = self.prefix_embeddings(stream_layout)
            first = self.step_embedding(0, None, stream_layout).unsqueeze(0)
            rows = torch.cat([prefix, first], dim=0)
            if use_cache:
                per_stream_logits[s] = self._last_logits_cached(rows, caches[s])
            else:
                histories[s] = [rows[i] for i in range(rows.shape[0])]
                per_stream_logits[s] = self._last_logits_full(histories[s])

        for i in range(n):
            logits = per_stream_logits[0]
            if len(streams) == 2:
                s_cfg = sampler.guidance_scale
                logits = per_stream_logits[1] + s_cfg * (per_stream_logits[0] - per_stream_logits[1])
            if i < len(forced):
                token = int(forced[i])
            else:
                token = sample_token(logits, sampler, rng)
            ids[i] = token
            logprobs[i] = log_softmax64(per_stream_logits[0])[token]
            if i + 1 == n:
                break
            for s, stream_layout in enumerate(streams):
                row = self.step_embedding(i + 1, token, stream_layout).unsqueeze(0)
                if use_cache:
                    per_stream_logits[s] = self._last_logits_cached(row, caches[s])
                else:
                    histories[s].append(row[0])
                    per_stream_logits[s] = self._last_logits_full(histories[s])
        return DecodeResult(ids=ids, logprobs=logprobs)


def count_params(model: ImageTokenModel) -> dict[str, int]:
    """Exact per-tensor parameter counts, keyed by state-dict name."""
    return {name: p.numel() for name, p in model.named_parameters()}


def total_params(model: ImageTokenModel) -> int:
    return sum(count_params(model).values())
