/**
 * Editing-session state. All state is data derived from (source image,
 * painted strokes, server responses), so replaying the same inputs
 * reproduces the same panels.
 */

import { editTokenCount, patchifyMask, type GridShape } from "./patchify.js";

export interface RawImage {
  pixels: Uint8Array; // RGB, row-major, length h*w*3
  height: number;
  width: number;
}

export function cloneImage(image: RawImage): RawImage {
  return { pixels: new Uint8Array(image.pixels), height: image.height, width: image.width };
}

export interface EditTurn {
  instruction: string;
  global: boolean;          // no mask: full regeneration
  maskPatch: Uint8Array;    // patch bits submitted with the request
  image: RawImage;          // server result
  positions: number[];
  steps: number;
}

export class CanvasSession {
  readonly shape: GridShape;
  readonly source: RawImage;
  maskPixels: Uint8Array;
  private turns: EditTurn[] = [];

  constructor(source: RawImage, shape: GridShape) {
    if (source.height !== shape.height || source.width !== shape.width) {
      throw new Error("source image does not match the configured grid");
    }
    this.source = cloneImage(source);
    this.shape = shape;
    this.maskPixels = new Uint8Array(shape.height * shape.width);
  }

  /** Live patch overlay: always the max-pool of the painted mask. */
  get patchOverlay(): Uint8Array {
    return patchifyMask(this.maskPixels, this.shape);
  }

  get editTokens(): number {
    return editTokenCount(this.patchOverlay);
  }

  /** Empty mask means the edit button runs in global (full-raster) mode. */
  get mode(): "masked" | "global" {
    return this.editTokens === 0 ? "global" : "masked";
  }

  clearMask(): void {
    this.maskPixels.fill(0);
  }

  get history(): readonly EditTurn[] {
    return this.turns;
  }

  /** The image the next edit request must submit. */
  currentImage(): RawImage {
    return this.turns.length ? this.turns[this.turns.length - 1].image : this.source;
  }

  /** Record a completed edit turn; the painted mask is consumed. */
  applyEdit(instruction: string,
            result: { image: RawImage; positions: number[]; steps: number }): EditTurn {
    const turn: EditTurn = {
      instruction,
      global: this.mode === "global",
      maskPatch: this.patchOverlay,
      image: cloneImage(result.image),
      positions: [...result.positions],
      steps: result.steps,
    };
    this.turns.push(turn);
    this.clearMask();
    return turn;
  }

  /** Rewind to the state after `turnCount` turns (0 = back to the source). */
  undoTo(turnCount: number): void {
    if (turnCount < 0 || turnCount > this.turns.length) {
      throw new Error(`cannot undo to turn ${turnCount} of ${this.turns.length}`);
    }
    this.turns = this.turns.slice(0, turnCount);
  }

  /** Every visible state: the source followed by each turn's result. */
  states(): RawImage[] {
    return [this.source, ...this.turns.map((t) => t.image)];
  }
}

export interface RefineRound {
  image: RawImage;
  reward: number;
  accepted: boolean;
}

/**
 * Refinement panel state: the next request always resubmits the last
 * accepted image, so rejecting a round discards its pixels.
 */
export class RefineSession {
  readonly prompt: string;
  private base: RawImage;
  private rounds: RefineRound[] = [];

  constructor(prompt: string, base: RawImage) {
    this.prompt = prompt;
    this.base = cloneImage(base);
  }

  get trajectory(): readonly RefineRound[] {
    return this.rounds;
  }

  record(image: RawImage, reward: number, accepted: boolean): void {
    this.rounds.push({ image: cloneImage(image), reward, accepted });
  }

  /** Image submitted with the next refinement request. */
  nextRequestImage(): RawImage {
    for (let i = this.rounds.length - 1; i >= 0; i--) {
      if (this.rounds[i].accepted) return this.rounds[i].image;
    }
    return this.base;
  }

  rewards(): number[] {
    return this.rounds.map((r) => r.reward);
  }
}
