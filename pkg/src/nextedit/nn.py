"""Differentiable kernels for the token transformer.

Storage is float32; reductions (softmax, norms, cross entropy) accumulate
in float64 so central-difference gradient checks stay clean. Feeding
float64 tensors runs the whole op in float64, which the test suite uses
for tight-tolerance checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, InputError

NORM_EPS = 1e-5
ADAM_EPS = 1e-8


@dataclass
class OptimizerConfig:
    """Decoupled AdamW hyperparameters (constant learning rate)."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = ADAM_EPS
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1): got {self.beta1}, {self.beta2}")
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive: got {self.lr}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive: got {self.eps}")


def rms_norm(x: torch.Tensor, gain: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """Scale each row by 1/sqrt(mean(x^2) + eps), then by ``gain``."""
    ms = x.double().pow(2).mean(dim=-1, keepdim=True)
    return (x.double() * torch.rsqrt(ms + eps)).to(x.dtype) * gain


def _softmax64(scores: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores.double(), dim=-1).to(scores.dtype)


class LayerCache:
    """Per-layer key/value state for incremental decoding."""

    def __init__(self) -> None:
        self.k: torch.Tensor | None = None
        self.v: torch.Tensor | None = None

    def __len__(self) -> int:
        return 0 if self.k is None else self.k.shape[-2]

    def extend(self, k: torch.Tensor, v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if self.k is None:
            self.k, self.v = k, v
        else:
            self.k = torch.cat([self.k, k], dim=-2)
            self.v = torch.cat([self.v, v], dim=-2)
        return self.k, self.v


class SelfAttention(nn.Module):
    """Multi-head self-attention with optional incremental cache."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.wq = nn.Linear(d_model, d_model, bias=False)
        self.wk = nn.Linear(d_model, d_model, bias=False)
        self.wv = nn.Linear(d_model, d_model, bias=False)
        self.wo = nn.Linear(d_model, d_model, bias=False)

    def forward(self, x: torch.Tensor, cache: LayerCache | None = None,
                causal: bool = True) -> torch.Tensor:
        b, s, d = x.shape
        h, hd = self.n_heads, self.head_dim
        q = self.wq(x).view(b, s, h, hd).transpose(1, 2)
        k = self.wk(x).view(b, s, h, hd).transpose(1, 2)
        v = self.wv(x).view(b, s, h, hd).transpose(1, 2)
        past = 0
        if cache is not None:
            past = len(cache)
            k, v = cache.extend(k, v)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(hd)
        if causal and s > 1:
            t = past + s
            mask = torch.triu(torch.full((s, t), float("-inf"), dtype=scores.dtype), 1 + past)
            scores = scores + mask
        attn = _softmax64(scores)
        out = (attn @ v).transpose(1, 2).reshape(b, s, d)
        return self.wo(out)


class DecoderBlock(nn.Module):
    """Pre-norm decoder block: RMS-normed attention + gated feed-forward."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int):
        super().__init__()
        self.attn_gain = nn.Parameter(torch.ones(d_model))
        self.attn = SelfAttention(d_model, n_heads)
        self.ffn_gain = nn.Parameter(torch.ones(d_model))
        self.w1 = nn.Linear(d_model, ffn_dim, bias=False)
        self.w3 = nn.Linear(d_model, ffn_dim, bias=False)
        self.w2 = nn.Linear(ffn_dim, d_model, bias=False)

    def forward(self, x: torch.Tensor, cache: LayerCache | None = None,
                causal: bool = True) -> torch.Tensor:
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
        h = x + self.attn(rms_norm(x, self.attn_gain), cache=cache, causal=causal)
        hn = rms_norm(h, self.ffn_gain)
        h = h + self.w2(F.silu(self.w1(hn)) * self.w3(hn))
        return h.squeeze(0) if squeeze else h


def attention_block(x: torch.Tensor, weights: DecoderBlock,
                    cache: LayerCache | None = None, causal: bool = True) -> torch.Tensor:
    """Functional alias for a decoder block forward pass."""
    return weights(x, cache=cache, causal=causal)


def cross_entropy(logits: torch.Tensor, targets: torch.Tensor,
                  position_weights: torch.Tensor | None = None) -> torch.Tensor:
    """Weighted mean of -log softmax(logits)[target].

    Positions with weight 0 contribute nothing; weights default to 1.
    """
    n, v = logits.shape
    targets = torch.as_tensor(targets, dtype=torch.long)
    if targets.numel() and (targets.min() < 0 or targets.max() >= v):
        raise InputError(f"target ids must lie in [0, {v})")
    logp = F.log_softmax(logits.double(), dim=-1)
    nll = -logp[torch.arange(n), targets]
    if position_weights is None:
        return (nll.mean()).to(logits.dtype)
    w = torch.as_tensor(position_weights, dtype=torch.float64)
    total = w.sum()
    if total <= 0:
        raise InputError("cross_entropy needs at least one position with positive weight")
    return ((nll * w).sum() / total).to(logits.dtype)


@torch.no_grad()
def adamw_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor],
               state: dict[str, dict[str, torch.Tensor]], cfg: OptimizerConfig,
               t: int) -> None:
    """One bias-corrected AdamW update, in place.

    Decoupled weight decay is applied to the parameter before the moment
    update, matching the reference formulation. ``t`` is 1-based.
    """
    if t < 1:
        raise ConfigError(f"step index must be >= 1: got {t}")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {name}: {tuple(g.shape)} vs {tuple(p.shape)}")
        if name not in state:
            state[name] = {"m": torch.zeros_like(p), "v": torch.zeros_like(p)}
        m, v = state[name]["m"], state[name]["v"]
        if cfg.weight_decay:
            p.mul_(1.0 - cfg.lr * cfg.weight_decay)
        m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
        v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
        denom = (v / bc2).sqrt_().add_(cfg.eps)
        p.addcdiv_(m / bc1, denom, value=-cfg.lr)


class AdamW:
    """Stateful wrapper over :func:`adamw_step` driven by ``.grad`` fields."""

    def __init__(self, named_params: dict[str, torch.Tensor], cfg: OptimizerConfig):
        self.params = dict(named_params)
        self.cfg = cfg
        self.state: dict[str, dict[str, torch.Tensor]] = {}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        grads = {n: p.grad for n, p in self.params.items()
                 if p.grad is not None and p.requires_grad}
        adamw_step(self.params, grads, self.state, self.cfg, self.t)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
