"""HTTP facade: generation, editing, and refinement behind an async job API.

Decodes run on a bounded worker pool; weights are immutable and shared, so
concurrent jobs match serial execution. Requests are validated before a
job is created (synchronous 4xx/5xx); execution failures mark the job
``failed`` with a machine-readable code. All endpoints are deterministic
under (request, seed, checkpoint hash).
"""

from __future__ import annotations

import base64
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .critic import load_critic
from .editing import EditRequest, nep_edit, outside_mask_checksum
from .errors import ConfigError, InputError
from .model import SamplerConfig
from .refine import RefineConfig, refine_loop
from .rng import STREAM_SAMPLE, make_rng
from .sequence import GenerationOrder, TextTokens, build_pretrain_layout
from .tokenizer import decode_tokens, encode_image, image_to_png, patchify_mask, png_to_image, png_to_mask
from .train import load_checkpoint

_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_ulid() -> str:
    ts = int(time.time() * 1000) & ((1 << 48) - 1)
    value = (ts << 80) | int.from_bytes(os.urandom(10), "big")
    return "".join(_B32[(value >> (5 * i)) & 31] for i in reversed(range(26)))


JOB_STATES = ("queued", "running", "done", "failed")


@dataclass
class Job:
    id: str
    kind: str
    state: str = "queued"
    request: dict = field(default_factory=dict)
    result: dict | None = None
    error: dict | None = None
    created_ms: float = field(default_factory=lambda: time.time() * 1000)
    started_ms: float | None = None
    finished_ms: float | None = None

    def to_json(self) -> dict:
        return asdict(self)


class JobStore:
    def __init__(self) -> None:
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()

    def create(self, kind: str, request: dict) -> Job:
        job = Job(id=new_ulid(), kind=kind, request=request)
        with self._lock:
            self._jobs[job.id] = job
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def transition(self, job_id: str, state: str, **fields: Any) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if JOB_STATES.index(state) < JOB_STATES.index(job.state):
                raise RuntimeError(f"illegal job transition {job.state} -> {state}")
            job.state = state
            for key, value in fields.items():
                setattr(job, key, value)


class SamplerBody(BaseModel):
    temperature: float = 1.0
    top_k: int = 64
    greedy: bool = False
    guidance_scale: float = 0.0


class GenerateBody(BaseModel):
    prompt: str
    seed: int = 0
    sampler: SamplerBody | None = None


class EditBody(BaseModel):
    image: str
    instruction: str
    mask: str | None = None
    seed: int = 0
    sampler: SamplerBody | None = None


class RefineBody(BaseModel):
    prompt: str
    image: str | None = None
    rounds: int = 4
    k: int = 16
    candidates: int = 4
    seed: int = 0


def _bad(code: str, message: str, status: int = 400) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _sampler_from(body: SamplerBody | None, default_greedy: bool) -> SamplerConfig:
    if body is None:
        return SamplerConfig(greedy=default_greedy)
    try:
        return SamplerConfig(**body.model_dump())
    except ConfigError as exc:
        raise _bad("bad_sampler", str(exc)) from exc


def create_app(ckpt_path: str | None = None, critic_path: str | None = None,
               workers: int = 2) -> FastAPI:
    app = FastAPI(title="nextedit")
    state: dict[str, Any] = {"model": None, "tok": None, "model_hash": None,
                             "critic": None, "critic_hash": None}
    if ckpt_path:
        model, tok_cfg, _, digest = load_checkpoint(ckpt_path)
        model.eval()
        state.update(model=model, tok=tok_cfg, model_hash=digest)
    if critic_path:
        critic, _, digest = load_critic(critic_path)
        critic.eval()
        state.update(critic=critic, critic_hash=digest)
    jobs = JobStore()
    pool = ThreadPoolExecutor(max_workers=workers)
    app.state.jobs = jobs

    def require_model():
        if state["model"] is None:
            raise _bad("model_not_loaded", "no model checkpoint loaded", status=503)
        return state["model"], state["tok"]

    def submit(kind: str, request: dict, fn) -> dict:
        job = jobs.create(kind, request)

        def run() -> None:
            jobs.transition(job.id, "running", started_ms=time.time() * 1000)
            try:
                result = fn()
                jobs.transition(job.id, "done", result=result,
                                finished_ms=time.time() * 1000)
            except (InputError, ConfigError) as exc:
                jobs.transition(job.id, "failed",
                                error={"code": "bad_request", "message": str(exc)},
                                finished_ms=time.time() * 1000)
            except Exception as exc:  # pragma: no cover - defensive
                jobs.transition(job.id, "failed",
                                error={"code": "internal", "message": str(exc)},
                                finished_ms=time.time() * 1000)

        pool.submit(run)
        return {"job_id": job.id}

    @app.post("/v1/generate")
    def generate(body: GenerateBody):
        model, tok = require_model()
        sampler = _sampler_from(body.sampler, default_greedy=False)
        try:
            text = TextTokens.encode(body.prompt, model.cfg.text_len)
        except InputError as exc:
            raise _bad("bad_prompt", str(exc)) from exc

        def run() -> dict:
            layout = build_pretrain_layout(
                text, None, GenerationOrder(np.arange(model.cfg.grid_tokens)))
            out = model.decode(layout, sampler, make_rng(body.seed, STREAM_SAMPLE))
            from .tokenizer import TokenGrid
            grid = TokenGrid(out.ids, tok.rows, tok.cols)
            return {"image": base64.b64encode(image_to_png(decode_tokens(grid, tok))).decode(),
                    "tokens": out.ids.tolist(), "logprob_sum": out.logprob_sum}

        return submit("generate", body.model_dump(), run)

    @app.post("/v1/edit")
    def edit(body: EditBody):
        model, tok = require_model()
        if not model.cfg.edit_tokens:
            raise _bad("needs_stage2",
                       "loaded checkpoint lacks the edit-selector pair", status=409)
        sampler = _sampler_from(body.sampler, default_greedy=True)
        try:
            image = png_to_image(base64.b64decode(body.image, validate=True), tok)
        except Exception as exc:
            raise _bad("bad_image", f"could not decode image: {exc}") from exc
        mask_pixels = None
        if body.mask is not None:
            try:
                mask_pixels = png_to_mask(base64.b64decode(body.mask, validate=True), tok)
            except InputError as exc:
                raise _bad("mask_mismatch", str(exc)) from exc
            except Exception as exc:
                raise _bad("bad_image", f"could not decode mask: {exc}") from exc
        try:
            TextTokens.encode(body.instruction, model.cfg.text_len)
        except InputError as exc:
            raise _bad("bad_prompt", str(exc)) from exc

        def run() -> dict:
            result = nep_edit(model, tok, EditRequest(
                image=image, instruction=body.instruction, mask_pixels=mask_pixels,
                sampler=sampler, seed=body.seed))
            patch = (patchify_mask(mask_pixels, tok).patch if mask_pixels is not None
                     else np.ones(tok.grid_tokens, dtype=np.uint8))
            return {
                "image": base64.b64encode(image_to_png(result.image)).decode(),
                "l_e": result.edit_count, "steps": result.steps,
                "positions": result.positions.tolist(),
                "logprob_sum": result.logprob_sum,
                "outside_checksum_source": outside_mask_checksum(image, patch, tok),
                "outside_checksum_result": outside_mask_checksum(result.image, patch, tok),
            }

        return submit("edit", body.model_dump(), run)

    @app.post("/v1/refine")
    def refine(body: RefineBody):
        model, tok = require_model()
        if state["critic"] is None:
            raise _bad("critic_not_loaded", "no critic checkpoint loaded", status=503)
        if not model.cfg.edit_tokens:
            raise _bad("needs_stage2",
                       "refinement needs the edit-selector pair", status=409)
        try:
            cfg = RefineConfig(k=body.k, candidates=body.candidates, rounds=body.rounds)
            if body.k > model.cfg.grid_tokens:
                raise ConfigError(f"k={body.k} exceeds grid size")
        except ConfigError as exc:
            raise _bad("bad_refine_config", str(exc)) from exc
        try:
            text = TextTokens.encode(body.prompt, model.cfg.text_len)
        except InputError as exc:
            raise _bad("bad_prompt", str(exc)) from exc
        initial_image = None
        if body.image is not None:
            try:
                initial_image = png_to_image(base64.b64decode(body.image, validate=True), tok)
            except Exception as exc:
                raise _bad("bad_image", f"could not decode image: {exc}") from exc

        def run() -> dict:
            if initial_image is not None:
                grid = encode_image(initial_image, tok)
            else:
                layout = build_pretrain_layout(
                    text, None, GenerationOrder(np.arange(model.cfg.grid_tokens)))
                out = model.decode(layout, SamplerConfig(temperature=1.0),
                                   make_rng(body.seed, STREAM_SAMPLE))
                from .tokenizer import TokenGrid
                grid = TokenGrid(out.ids, tok.rows, tok.cols)
            trajectory = refine_loop(model, tok, grid, body.prompt, state["critic"],
                                     cfg, make_rng(body.seed))
            return {"trajectory": [
                {"image": base64.b64encode(image_to_png(decode_tokens(p.grid, tok))).decode(),
                 "reward": p.reward, "accepted": p.accepted}
                for p in trajectory]}

        return submit("refine", body.model_dump(), run)

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise _bad("unknown_job", f"no job {job_id}", status=404)
        return job.to_json()

    @app.get("/v1/health")
    def health():
        model = state["model"]
        return {
            "checkpoints": {
                "model": None if model is None else {"config_hash": state["model_hash"]},
                "critic": None if state["critic"] is None else {"config_hash": state["critic_hash"]},
            },
            "config": None if model is None else {
                "model": model.cfg.to_json(),
                "tokenizer": state["tok"].to_json(),
            },
        }

    return app
