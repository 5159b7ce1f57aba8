/**
 * DOM wiring for the editing companion: paint a mask over the loaded
 * image (live patch overlay + token counter), run mask-scoped edits with
 * a before/after slider and out-of-mask diff panel, and step the
 * refinement loop with accept/reject controls.
 */

import { ApiClient } from "./api.js";
import { outOfMaskDiff } from "./diff.js";
import { paintDab, type GridShape } from "./patchify.js";
import { drawRaw, maskPngB64, pngB64FromRaw, rawFromCanvas, rawFromPngB64 } from "./png.js";
import { CanvasSession, RefineSession, type RawImage } from "./session.js";

const SCALE = 10;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private api = new ApiClient("");
  private shape: GridShape = { height: 32, width: 32, patch: 4 };
  private session: CanvasSession | null = null;
  private refine: RefineSession | null = null;
  private brush = 3;
  private painting = false;

  private board = el<HTMLCanvasElement>("board");
  private beforeAfter = el<HTMLCanvasElement>("before-after");
  private diffPanel = el<HTMLCanvasElement>("diff-panel");
  private status = el<HTMLSpanElement>("status");
  private counter = el<HTMLSpanElement>("token-counter");
  private editButton = el<HTMLButtonElement>("run-edit");
  private slider = el<HTMLInputElement>("slider");
  private sparkline = el<HTMLCanvasElement>("sparkline");

  async start(): Promise<void> {
    const health = await this.api.health();
    if (health.config) {
      const t = health.config.tokenizer;
      this.shape = { height: t.image_h, width: t.image_w, patch: t.patch };
    }
    this.board.width = this.shape.width * SCALE;
    this.board.height = this.shape.height * SCALE;
    this.bind();
    this.note(`ready (${this.shape.width}x${this.shape.height}, patch ${this.shape.patch})`);
  }

  private note(message: string): void {
    this.status.textContent = message;
  }

  private bind(): void {
    el<HTMLInputElement>("file").addEventListener("change", (ev) => {
      const file = (ev.target as HTMLInputElement).files?.[0];
      if (file) void this.loadFile(file);
    });
    el<HTMLButtonElement>("generate").addEventListener("click", () => void this.generate());
    el<HTMLButtonElement>("clear-mask").addEventListener("click", () => {
      this.session?.clearMask();
      this.redraw();
    });
    el<HTMLButtonElement>("undo").addEventListener("click", () => {
      if (this.session && this.session.history.length) {
        this.session.undoTo(this.session.history.length - 1);
        this.redraw();
      }
    });
    this.editButton.addEventListener("click", () => void this.runEdit());
    el<HTMLButtonElement>("run-refine").addEventListener("click", () => void this.runRefine());
    el<HTMLInputElement>("brush").addEventListener("input", (ev) => {
      this.brush = Number((ev.target as HTMLInputElement).value);
    });
    this.slider.addEventListener("input", () => this.drawBeforeAfter());

    this.board.addEventListener("mousedown", (ev) => {
      this.painting = true;
      this.dab(ev);
    });
    this.board.addEventListener("mousemove", (ev) => {
      if (this.painting) this.dab(ev);
    });
    window.addEventListener("mouseup", () => {
      this.painting = false;
    });
  }

  private dab(ev: MouseEvent): void {
    if (!this.session) return;
    const rect = this.board.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * this.shape.width;
    const y = ((ev.clientY - rect.top) / rect.height) * this.shape.height;
    paintDab(this.session.maskPixels, this.shape, x, y, this.brush, ev.shiftKey);
    this.redraw();
  }

  private async loadFile(file: File): Promise<void> {
    const url = URL.createObjectURL(file);
    try {
      const img = new Image();
      img.src = url;
      await img.decode();
      const canvas = document.createElement("canvas");
      canvas.width = this.shape.width;
      canvas.height = this.shape.height;
      canvas.getContext("2d")!.drawImage(img, 0, 0, canvas.width, canvas.height);
      this.setSource(rawFromCanvas(canvas));
    } finally {
      URL.revokeObjectURL(url);
    }
  }

  private async generate(): Promise<void> {
    const prompt = el<HTMLInputElement>("prompt").value.trim();
    if (!prompt) return this.note("enter a prompt first");
    this.note("generating...");
    try {
      const result = await this.api.generate(prompt, Number(el<HTMLInputElement>("seed").value) || 0);
      this.setSource(await rawFromPngB64(result.image, this.shape.width, this.shape.height));
      this.note("generated");
    } catch (err) {
      this.note(`error: ${(err as { message?: string }).message ?? err}`);
    }
  }

  private setSource(image: RawImage): void {
    this.session = new CanvasSession(image, this.shape);
    this.refine = null;
    this.redraw();
  }

  private redraw(): void {
    if (!this.session) return;
    const ctx = this.board.getContext("2d")!;
    const current = this.session.currentImage();
    const off = document.createElement("canvas");
    drawRaw(current, off);
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.board.width, this.board.height);
    ctx.drawImage(off, 0, 0, this.board.width, this.board.height);

    // live patch overlay: exactly the tokens the server will regenerate
    const overlay = this.session.patchOverlay;
    const cols = this.shape.width / this.shape.patch;
    const cell = this.shape.patch * SCALE;
    ctx.fillStyle = "rgba(64, 156, 255, 0.45)";
    ctx.strokeStyle = "rgba(64, 156, 255, 0.9)";
    overlay.forEach((bit, i) => {
      if (!bit) return;
      const x = (i % cols) * cell;
      const y = Math.floor(i / cols) * cell;
      ctx.fillRect(x, y, cell, cell);
      ctx.strokeRect(x + 0.5, y + 0.5, cell - 1, cell - 1);
    });

    this.counter.textContent = String(this.session.editTokens);
    this.editButton.textContent =
      this.session.mode === "global" ? "Run global edit" : "Run masked edit";
    this.drawBeforeAfter();
  }

  private async runEdit(): Promise<void> {
    if (!this.session) return this.note("load or generate an image first");
    const instruction = el<HTMLInputElement>("instruction").value.trim();
    if (!instruction) return this.note("enter an instruction");
    const seed = Number(el<HTMLInputElement>("seed").value) || 0;
    const masked = this.session.mode === "masked";
    const maskPatchAtSubmit = this.session.patchOverlay;
    this.note(masked ? "editing masked region..." : "global edit...");
    this.editButton.disabled = true;
    try {
      const before = this.session.currentImage();
      const result = await this.api.edit(
        pngB64FromRaw(before),
        instruction,
        masked ? maskPngB64(this.session.maskPixels, this.shape.width, this.shape.height) : null,
        seed,
      );
      const after = await rawFromPngB64(result.image, this.shape.width, this.shape.height);
      this.session.applyEdit(instruction, {
        image: after,
        positions: result.positions,
        steps: result.steps,
      });
      this.drawDiff(before, after, maskPatchAtSubmit);
      this.note(`edited: ${result.steps} steps for ${result.l_e} tokens`);
      this.redraw();
    } catch (err) {
      this.note(`error: ${(err as { message?: string }).message ?? err}`);
    } finally {
      this.editButton.disabled = false;
    }
  }

  private drawDiff(before: RawImage, after: RawImage, maskPatch: Uint8Array): void {
    const report = outOfMaskDiff(before, after, maskPatch, this.shape);
    const ctx = this.diffPanel.getContext("2d")!;
    this.diffPanel.width = this.shape.width;
    this.diffPanel.height = this.shape.height;
    const data = ctx.createImageData(this.shape.width, this.shape.height);
    report.heat.forEach((value, i) => {
      data.data[4 * i] = Math.min(255, value);
      data.data[4 * i + 3] = 255;
    });
    ctx.putImageData(data, 0, 0);
    el<HTMLSpanElement>("diff-status").textContent = report.allZeroOutside
      ? "outside-mask diff: all zero"
      : `outside-mask diff: max ${report.maxOutside}`;
  }

  private drawBeforeAfter(): void {
    if (!this.session) return;
    const states = this.session.states();
    if (states.length < 2) return;
    const before = states[states.length - 2];
    const after = states[states.length - 1];
    const split = Number(this.slider.value) / 100;
    const ctx = this.beforeAfter.getContext("2d")!;
    this.beforeAfter.width = this.shape.width * 4;
    this.beforeAfter.height = this.shape.height * 4;
    const offA = document.createElement("canvas");
    const offB = document.createElement("canvas");
    drawRaw(before, offA);
    drawRaw(after, offB);
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(offA, 0, 0, this.beforeAfter.width, this.beforeAfter.height);
    const cut = Math.round(this.beforeAfter.width * split);
    if (cut > 0) {
      ctx.drawImage(offB, 0, 0, before.width * split, before.height,
                    0, 0, cut, this.beforeAfter.height);
    }
  }

  private async runRefine(): Promise<void> {
    if (!this.session) return this.note("load or generate an image first");
    const prompt = el<HTMLInputElement>("prompt").value.trim();
    if (!prompt) return this.note("refinement needs a prompt");
    const seed = Number(el<HTMLInputElement>("seed").value) || 0;
    if (!this.refine) this.refine = new RefineSession(prompt, this.session.currentImage());
    this.note("refining...");
    try {
      const result = await this.api.refine(prompt, pngB64FromRaw(this.refine.nextRequestImage()), {
        rounds: 1, seed: seed + this.refine.trajectory.length,
      });
      const point = result.trajectory[result.trajectory.length - 1];
      const image = await rawFromPngB64(point.image, this.shape.width, this.shape.height);
      this.refine.record(image, point.reward, point.accepted);
      this.drawSparkline();
      this.note(`round ${this.refine.trajectory.length}: reward ${point.reward.toFixed(3)}` +
        (point.accepted ? " (accepted)" : " (rejected)"));
    } catch (err) {
      this.note(`error: ${(err as { message?: string }).message ?? err}`);
    }
  }

  private drawSparkline(): void {
    if (!this.refine) return;
    const rewards = this.refine.rewards();
    const ctx = this.sparkline.getContext("2d")!;
    ctx.clearRect(0, 0, this.sparkline.width, this.sparkline.height);
    ctx.beginPath();
    ctx.strokeStyle = "#2b8a3e";
    rewards.forEach((r, i) => {
      const x = (i / Math.max(1, rewards.length - 1)) * this.sparkline.width;
      const y = this.sparkline.height * (1 - r);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}

void new App().start();
