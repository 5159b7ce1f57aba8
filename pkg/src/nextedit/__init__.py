"""Any-order autoregressive image-token generation with mask-scoped editing.

The package is organized bottom-up:

- ``nn``         differentiable kernels (norm, attention block, loss, AdamW)
- ``tokenizer``  palette tokenizer, patch grids, editing masks
- ``vocab``      the fixed 64-word text vocabulary
- ``sequence``   generation orders and model-input layouts
- ``model``      the decoder-only transformer and incremental decoding
- ``checkpoint`` binary tensor container used for model/critic snapshots
- ``data``       synthetic shapes world: scenes, renders, shards
- ``train``      two-stage training loops (any-order pretrain, edit fine-tune)
- ``editing``    mask-scoped and zero-shot editing with exact fill-back
- ``critic``     convolutional quality critic and its analytic oracle score
- ``refine``     saliency scoring and the propose/revise/accept loop
- ``metrics``    pixel/feature/directional metrics and Frechet distance
- ``benchmark``  edit benchmark harness (masked vs full regeneration)
- ``service``    HTTP facade with async jobs
- ``cli``        command-line entry points
"""

__version__ = "0.1.0"
