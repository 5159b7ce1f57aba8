"""The standard desk-scale training recipe.

One seeded call produces the stage-1 any-order model, the stage-2 editing
model, and the trained critic, all on the default 32x32 / 64-token world.
Budgets are sized for a couple-of-core CPU box; the benchmark and
refinement experiments in scripts/ and the acceptance suite run on these
artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .critic import Critic, train_critic
from .data import decode_t2i_record, iter_records
from .model import ImageTokenModel, ModelConfig
from .tokenizer import TokenizerConfig
from .train import (TrainConfig, RunLog, edit_samples_from_records, extend_for_editing,
                    t2i_samples_from_records, train_edit, train_t2i)

PRETRAIN_STEPS = 2200
FINETUNE_STEPS = 900
CRITIC_STEPS = 1200
BATCH_SIZE = 24
DESK_LR = 1e-3
T2I_POOL = 4096
EDIT_POOL = 4096


@dataclass
class DeskArtifacts:
    tok: TokenizerConfig
    stage1: ImageTokenModel
    stage2: ImageTokenModel
    critic: Critic
    pretrain_log: RunLog
    finetune_log: RunLog


def pretrain_config(seed: int) -> TrainConfig:
    return TrainConfig(steps=PRETRAIN_STEPS, batch_size=BATCH_SIZE, lr=DESK_LR,
                       seed=seed, raster_prob=0.1)


def finetune_config(seed: int) -> TrainConfig:
    return TrainConfig(steps=FINETUNE_STEPS, batch_size=BATCH_SIZE, lr=DESK_LR,
                       seed=seed + 1, edit_mix_fraction=0.5, repair_fraction=0.25)


def run_desk_recipe(seed: int = 0, pretrain_steps: int = PRETRAIN_STEPS,
                    finetune_steps: int = FINETUNE_STEPS,
                    critic_steps: int = CRITIC_STEPS,
                    progress=None) -> DeskArtifacts:
    """Train both stages and the critic from scratch, deterministically."""
    tok = TokenizerConfig()

    def note(msg: str) -> None:
        if progress:
            progress(msg)

    note("building datasets")
    t2i_records = list(iter_records("t2i", T2I_POOL, seed, tok))
    edit_records = list(iter_records("edit", EDIT_POOL, seed + 1, tok))
    t2i = t2i_samples_from_records(t2i_records, tok, ModelConfig().text_len)
    edits = edit_samples_from_records(edit_records, tok, ModelConfig().text_len)

    note(f"stage 1: {pretrain_steps} any-order steps")
    stage1 = ImageTokenModel(ModelConfig(), seed=seed)
    cfg1 = pretrain_config(seed)
    cfg1.steps = pretrain_steps
    pretrain_log = train_t2i(stage1, t2i, cfg1)

    note(f"stage 2: {finetune_steps} editing steps")
    stage2 = extend_for_editing(stage1, seed=seed)
    cfg2 = finetune_config(seed)
    cfg2.steps = finetune_steps
    finetune_log = train_edit(stage2, edits, t2i, cfg2, tok)

    note(f"critic: {critic_steps} regression steps")
    pool = [decode_t2i_record(r, tok) for r in t2i_records[:1024]]
    critic = train_critic(pool, tok, steps=critic_steps, batch_size=32,
                          lr=1e-3, seed=seed + 2)
    return DeskArtifacts(tok=tok, stage1=stage1, stage2=stage2, critic=critic,
                         pretrain_log=pretrain_log, finetune_log=finetune_log)
