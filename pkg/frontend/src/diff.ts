/**
 * Out-of-mask difference heatmap: the visual witness of the preservation
 * guarantee. For a mask-scoped edit every pixel outside mask-covered
 * patches must be byte-identical, so the heatmap must be all zero there.
 */

import { patchesToPixels, type GridShape } from "./patchify.js";
import type { RawImage } from "./session.js";

export interface DiffReport {
  /** per-pixel sum of absolute channel differences, only outside the mask */
  heat: Uint16Array;
  maxOutside: number;
  allZeroOutside: boolean;
}

export function outOfMaskDiff(before: RawImage, after: RawImage,
                              patchMask: Uint8Array, shape: GridShape): DiffReport {
  if (before.pixels.length !== after.pixels.length) {
    throw new Error("image sizes differ");
  }
  const covered = patchesToPixels(patchMask, shape);
  const heat = new Uint16Array(shape.height * shape.width);
  let maxOutside = 0;
  for (let i = 0; i < covered.length; i++) {
    if (covered[i] !== 0) continue;
    const d =
      Math.abs(before.pixels[3 * i] - after.pixels[3 * i]) +
      Math.abs(before.pixels[3 * i + 1] - after.pixels[3 * i + 1]) +
      Math.abs(before.pixels[3 * i + 2] - after.pixels[3 * i + 2]);
    heat[i] = d;
    if (d > maxOutside) maxOutside = d;
  }
  return { heat, maxOutside, allZeroOutside: maxOutside === 0 };
}
