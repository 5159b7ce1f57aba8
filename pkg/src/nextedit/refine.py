"""Critic-guided iterative refinement.

Each round scores the current render per token cell with a saliency map
(channel-weighted, rectified feature sum; weights are spatially averaged
score gradients), proposes the K lowest-scoring cells as the revision
region, regenerates that region under several random orders, keeps the
highest-scoring candidate, and accepts it only if it strictly beats the
current score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .critic import Critic
from .errors import ConfigError
from .model import ImageTokenModel, SamplerConfig
from .rng import split_rng
from .sequence import GenerationOrder, TextTokens, build_edit_layout
from .tokenizer import TokenGrid, TokenizerConfig, decode_tokens, mask_from_patches


@dataclass
class GradCamReport:
    channel_weights: np.ndarray  # one weight per feature channel
    scores: np.ndarray           # rectified per-cell saliency, raster order


@dataclass
class RefineConfig:
    k: int = 16                 # revision-region size in tokens
    candidates: int = 4         # regenerations per round
    rounds: int = 4
    mask_previous: bool = True  # hide current tokens at revision positions
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(temperature=1.0, top_k=64))

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if self.candidates < 1:
            raise ConfigError("candidates must be >= 1")
        if self.rounds < 0:
            raise ConfigError("rounds must be >= 0")


def grad_cam_scores(critic, image: np.ndarray, caption: str) -> GradCamReport:
    """Saliency per grid cell from any critic exposing ``features`` and
    ``score_from_features``."""
    feats = critic.features(image, caption).detach().requires_grad_(True)
    score = critic.score_from_features(feats.unsqueeze(0))[0]
    grads = torch.autograd.grad(score, feats)[0]
    alpha = grads.mean(dim=(-2, -1))
    cam = torch.relu((alpha[:, None, None] * feats).sum(dim=0))
    return GradCamReport(channel_weights=alpha.detach().numpy(),
                         scores=cam.detach().numpy().reshape(-1))


def propose_revision(report: GradCamReport, k: int) -> np.ndarray:
    """The k positions with smallest saliency; ties keep raster order."""
    if k < 0 or k > len(report.scores):
        raise ConfigError(f"k={k} out of range for {len(report.scores)} cells")
    return np.argsort(report.scores, kind="stable")[:k].astype(np.int64)


@dataclass
class RefineOutcome:
    grid: TokenGrid
    accepted: bool
    reward: float            # critic score of the returned grid
    base_reward: float       # critic score before the round
    candidate_rewards: list[float]
    decode_steps: int


def refine_once(model: ImageTokenModel, tok_cfg: TokenizerConfig, current: TokenGrid,
                caption: str, critic: Critic, cfg: RefineConfig,
                rng: np.random.Generator) -> RefineOutcome:
    """One propose/revise/accept round over the current grid."""
    if cfg.k > tok_cfg.grid_tokens:
        raise ConfigError(f"k={cfg.k} exceeds grid size {tok_cfg.grid_tokens}")
    base_image = decode_tokens(current, tok_cfg)
    base_reward = critic.score(base_image, caption)
    if cfg.k == 0:
        return RefineOutcome(grid=current, accepted=False, reward=base_reward,
                             base_reward=base_reward, candidate_rewards=[], decode_steps=0)

    report = grad_cam_scores(critic, base_image, caption)
    revision = propose_revision(report, cfg.k)
    patch = np.zeros(tok_cfg.grid_tokens, dtype=np.uint8)
    patch[revision] = 1
    mask = mask_from_patches(patch, tok_cfg)
    text = TextTokens.encode(caption, model.cfg.text_len)

    candidates: list[TokenGrid] = []
    rewards: list[float] = []
    steps = 0
    for cand_rng in split_rng(rng, cfg.candidates):
        order = GenerationOrder(cand_rng.permutation(revision))
        layout = build_edit_layout(text, current, mask, order=order,
                                   mask_source=cfg.mask_previous)
        out = model.decode(layout, cfg.sampler, cand_rng)
        steps += len(out.ids)
        grid = current.copy()
        grid.ids[layout.gen_order] = out.ids
        candidates.append(grid)
        rewards.append(critic.score(decode_tokens(grid, tok_cfg), caption))

    best = int(np.argmax(rewards))  # first max: deterministic by candidate index
    if rewards[best] > base_reward:
        return RefineOutcome(grid=candidates[best], accepted=True, reward=rewards[best],
                             base_reward=base_reward, candidate_rewards=rewards,
                             decode_steps=steps)
    return RefineOutcome(grid=current, accepted=False, reward=base_reward,
                         base_reward=base_reward, candidate_rewards=rewards,
                         decode_steps=steps)


@dataclass
class TrajectoryPoint:
    grid: TokenGrid
    reward: float
    accepted: bool


def refine_loop(model: ImageTokenModel, tok_cfg: TokenizerConfig, initial: TokenGrid,
                caption: str, critic: Critic, cfg: RefineConfig,
                rng: np.random.Generator) -> list[TrajectoryPoint]:
    """Apply ``rounds`` refinement rounds, re-scoring saliency each time.
    The trajectory has ``rounds + 1`` points, the first being the input."""
    current = initial
    trajectory = [TrajectoryPoint(grid=initial,
                                  reward=critic.score(decode_tokens(initial, tok_cfg), caption),
                                  accepted=False)]
    for _ in range(cfg.rounds):
        outcome = refine_once(model, tok_cfg, current, caption, critic, cfg, rng)
        current = outcome.grid
        trajectory.append(TrajectoryPoint(grid=current, reward=outcome.reward,
                                          accepted=outcome.accepted))
    return trajectory
