/**
 * Client-side mirror of the server's mask patchification: max-pool the
 * pixel mask over non-overlapping p x p windows, raster-flattened. Must
 * stay bit-for-bit identical to the server (shared test vectors enforce
 * this), because the overlay promises the user exactly which tokens the
 * server will regenerate.
 */

export interface GridShape {
  height: number;
  width: number;
  patch: number;
}

/** Max-pool a binary pixel mask (row-major, length h*w) to patch bits. */
export function patchifyMask(pixels: Uint8Array, shape: GridShape): Uint8Array {
  const { height, width, patch } = shape;
  if (pixels.length !== height * width) {
    throw new Error(`mask has ${pixels.length} pixels, expected ${height * width}`);
  }
  if (height % patch !== 0 || width % patch !== 0) {
    throw new Error(`image ${height}x${width} not divisible by patch ${patch}`);
  }
  const rows = height / patch;
  const cols = width / patch;
  const out = new Uint8Array(rows * cols);
  for (let y = 0; y < height; y++) {
    const pr = Math.floor(y / patch);
    for (let x = 0; x < width; x++) {
      if (pixels[y * width + x] !== 0) {
        out[pr * cols + Math.floor(x / patch)] = 1;
      }
    }
  }
  return out;
}

/** Number of set patch bits (the token count the server will regenerate). */
export function editTokenCount(patchMask: Uint8Array): number {
  let n = 0;
  for (const bit of patchMask) n += bit;
  return n;
}

/** Lift patch bits back to a full-resolution pixel mask. */
export function patchesToPixels(patchMask: Uint8Array, shape: GridShape): Uint8Array {
  const { height, width, patch } = shape;
  const cols = width / patch;
  const out = new Uint8Array(height * width);
  for (let y = 0; y < height; y++) {
    const pr = Math.floor(y / patch);
    for (let x = 0; x < width; x++) {
      out[y * width + x] = patchMask[pr * cols + Math.floor(x / patch)];
    }
  }
  return out;
}

/** Paint a round brush dab into a pixel mask, in place. */
export function paintDab(
  pixels: Uint8Array,
  shape: GridShape,
  cx: number,
  cy: number,
  radius: number,
  erase = false,
): void {
  const { height, width } = shape;
  const r2 = radius * radius;
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(width - 1, Math.ceil(cx + radius));
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(height - 1, Math.ceil(cy + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - cx;
      const dy = y - cy;
      if (dx * dx + dy * dy <= r2) {
        pixels[y * width + x] = erase ? 0 : 1;
      }
    }
  }
}
