import numpy as np
import pytest
import torch

from nextedit.model import ImageTokenModel, ModelConfig
from nextedit.tokenizer import TokenizerConfig

# Keep the math run-to-run reproducible on any worker count.
torch.set_num_threads(min(torch.get_num_threads(), 2))


def tiny_config(**overrides) -> ModelConfig:
    """A 2-layer model on a 4x4 grid; fast enough for property tests."""
    base = dict(d_model=32, n_layers=2, n_heads=2, ffn_dim=64,
                v_img=64, v_txt=64, grid_tokens=16, text_len=8)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_tokenizer() -> TokenizerConfig:
    return TokenizerConfig(image_h=16, image_w=16, patch=4)


@pytest.fixture(scope="session")
def tok_cfg() -> TokenizerConfig:
    return TokenizerConfig()


@pytest.fixture()
def tiny_model() -> ImageTokenModel:
    return ImageTokenModel(tiny_config(edit_tokens=True), seed=7)


def random_grid(rng: np.random.Generator, cfg) -> "TokenGrid":
    from nextedit.tokenizer import TokenGrid
    if hasattr(cfg, "rows"):
        rows, cols, vocab = cfg.rows, cfg.cols, cfg.vocab
    else:
        rows = cols = int(cfg.grid_tokens ** 0.5)
        vocab = cfg.v_img
    return TokenGrid(rng.integers(0, vocab, rows * cols), rows, cols)
