"""Command-line entry points.

Subcommands: make-data, train-t2i, train-edit, generate, edit, refine,
eval, serve. Shared flags: --seed, --config (inline JSON or a path to a
JSON file, sections "model" / "train" / "sampler"), --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .benchmark import run_benchmark
from .critic import load_critic
from .data import decode_edit_record, load_shard, make_dataset
from .editing import EditRequest, nep_edit
from .model import ImageTokenModel, ModelConfig, SamplerConfig
from .refine import RefineConfig, refine_loop
from .rng import STREAM_SAMPLE, make_rng
from .sequence import GenerationOrder, TextTokens, build_pretrain_layout
from .tokenizer import (TokenGrid, TokenizerConfig, decode_tokens, encode_image,
                        image_to_png, png_to_image, png_to_mask)
from .train import (TrainConfig, edit_samples_from_records, extend_for_editing,
                    load_checkpoint, save_checkpoint, t2i_samples_from_records,
                    train_edit, train_t2i)


def _load_config(raw: str | None) -> dict:
    if not raw:
        return {}
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        with open(raw) as fh:
            return json.load(fh)


def _train_config(cfg: dict, seed: int, **overrides) -> TrainConfig:
    merged = dict(cfg.get("train", {}))
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("seed", seed)
    return TrainConfig(**merged)


def _sampler(cfg: dict, greedy_default: bool) -> SamplerConfig:
    section = dict(cfg.get("sampler", {}))
    section.setdefault("greedy", greedy_default)
    return SamplerConfig(**section)


def _write_image(path: str, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(image_to_png(image))


def cmd_make_data(args: argparse.Namespace) -> int:
    make_dataset(args.kind, args.count, args.seed, args.out, TokenizerConfig())
    print(f"wrote {args.count} {args.kind} records to {args.out}")
    return 0


def cmd_train_t2i(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    tok = TokenizerConfig()
    model_cfg = ModelConfig(**cfg.get("model", {}))
    model = ImageTokenModel(model_cfg, seed=args.seed)
    samples = t2i_samples_from_records(load_shard(args.data), tok, model_cfg.text_len)
    train_cfg = _train_config(cfg, args.seed, steps=args.steps, batch_size=args.batch_size)
    log = train_t2i(model, samples, train_cfg, log_path=args.log)
    digest = save_checkpoint(args.out, model, tok, meta={"stage": "t2i",
                                                         "train": train_cfg.to_json()})
    print(f"final loss {log.rows[-1]['loss']:.4f}; checkpoint {args.out} ({digest[:12]})")
    return 0


def cmd_train_edit(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    stage1, tok, _, _ = load_checkpoint(args.ckpt)
    model = extend_for_editing(stage1, seed=args.seed) if not stage1.cfg.edit_tokens else stage1
    edit_samples = edit_samples_from_records(load_shard(args.data), tok, model.cfg.text_len)
    repair_pool = []
    if args.t2i_data:
        repair_pool = t2i_samples_from_records(load_shard(args.t2i_data), tok,
                                               model.cfg.text_len)
    train_cfg = _train_config(cfg, args.seed, steps=args.steps, batch_size=args.batch_size)
    log = train_edit(model, edit_samples, repair_pool, train_cfg, tok, log_path=args.log)
    digest = save_checkpoint(args.out, model, tok, meta={"stage": "edit",
                                                         "train": train_cfg.to_json()})
    print(f"final loss {log.rows[-1]['loss']:.4f}; checkpoint {args.out} ({digest[:12]})")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    text = TextTokens.encode(args.prompt, model.cfg.text_len)
    layout = build_pretrain_layout(text, None,
                                   GenerationOrder(np.arange(model.cfg.grid_tokens)))
    out = model.decode(layout, _sampler(cfg, greedy_default=False),
                       make_rng(args.seed, STREAM_SAMPLE))
    image = decode_tokens(TokenGrid(out.ids, tok.rows, tok.cols), tok)
    _write_image(args.out, image)
    print(f"wrote {args.out} (logprob_sum {out.logprob_sum:.2f})")
    return 0


def cmd_edit(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    with open(args.image, "rb") as fh:
        image = png_to_image(fh.read(), tok)
    mask_pixels = None
    if args.mask:
        with open(args.mask, "rb") as fh:
            mask_pixels = png_to_mask(fh.read(), tok)
    result = nep_edit(model, tok, EditRequest(
        image=image, instruction=args.instruction, mask_pixels=mask_pixels,
        sampler=_sampler(cfg, greedy_default=True), seed=args.seed))
    _write_image(args.out, result.image)
    sidecar = {"l_e": result.edit_count, "steps": result.steps,
               "logprob_sum": result.logprob_sum}
    with open(args.out + ".json", "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
    print(f"wrote {args.out} ({result.steps} steps)")
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    critic, _, _ = load_critic(args.critic)
    critic.eval()
    os.makedirs(args.out_dir, exist_ok=True)
    if args.image:
        with open(args.image, "rb") as fh:
            grid = encode_image(png_to_image(fh.read(), tok), tok)
    else:
        text = TextTokens.encode(args.prompt, model.cfg.text_len)
        layout = build_pretrain_layout(text, None,
                                       GenerationOrder(np.arange(model.cfg.grid_tokens)))
        out = model.decode(layout, SamplerConfig(temperature=1.0),
                           make_rng(args.seed, STREAM_SAMPLE))
        grid = TokenGrid(out.ids, tok.rows, tok.cols)
    cfg = RefineConfig(k=args.k, candidates=args.candidates, rounds=args.rounds)
    trajectory = refine_loop(model, tok, grid, args.prompt, critic, cfg,
                             make_rng(args.seed))
    rows = []
    for i, point in enumerate(trajectory):
        path = os.path.join(args.out_dir, f"round{i:02d}.png")
        _write_image(path, decode_tokens(point.grid, tok))
        rows.append({"round": i, "reward": point.reward, "accepted": point.accepted,
                     "image": os.path.basename(path)})
    with open(os.path.join(args.out_dir, "trajectory.json"), "w") as fh:
        json.dump({"prompt": args.prompt, "seed": args.seed, "rounds": rows}, fh,
                  sort_keys=True, indent=2)
    print(f"wrote {len(trajectory)} rounds to {args.out_dir} "
          f"(reward {rows[0]['reward']:.3f} -> {rows[-1]['reward']:.3f})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model, tok, _, _ = load_checkpoint(args.ckpt)
    model.eval()
    triples = [decode_edit_record(r, tok) for r in load_shard(args.data)]
    report = run_benchmark(model, tok, triples, args.mode, seed=args.seed)
    with open(args.out, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
    agg = report["aggregate"]
    print(f"{args.mode}: L1 {agg['l1']:.4f}  L2 {agg['l2']:.4f}  "
          f"feature {agg['feature_sim']:.4f}  steps {agg['mean_steps']:.1f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(ckpt_path=args.ckpt, critic_path=args.critic, workers=args.workers)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--config", help="inline JSON or path to a JSON file")

    parser = argparse.ArgumentParser(prog="nextedit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", parents=[shared], help="write a synthetic shard")
    p.add_argument("--kind", choices=["t2i", "edit"], required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_make_data)

    p = sub.add_parser("train-t2i", parents=[shared], help="stage-1 pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_t2i)

    p = sub.add_parser("train-edit", parents=[shared], help="stage-2 editing fine-tune")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--t2i-data", help="shard for caption-repair samples")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_edit)

    p = sub.add_parser("generate", parents=[shared], help="text-to-image sample")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("edit", parents=[shared], help="mask-scoped edit")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--instruction", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_edit)

    p = sub.add_parser("refine", parents=[shared], help="critic-guided refinement")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--critic", required=True)
    p.add_argument("--prompt", required=True)
    p.add_argument("--image")
    p.add_argument("--rounds", type=int, default=4)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--candidates", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("eval", parents=[shared], help="edit benchmark")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["nep", "ntp_full"], default="nep")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", parents=[shared], help="HTTP service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--critic")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--workers", type=int, default=2)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
