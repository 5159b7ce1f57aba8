/** Canvas-based conversions between base64 PNGs and raw RGB images. */

import type { RawImage } from "./session.js";

export function rawFromCanvas(canvas: HTMLCanvasElement): RawImage {
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  const data = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  const pixels = new Uint8Array(canvas.width * canvas.height * 3);
  for (let i = 0; i < canvas.width * canvas.height; i++) {
    pixels[3 * i] = data[4 * i];
    pixels[3 * i + 1] = data[4 * i + 1];
    pixels[3 * i + 2] = data[4 * i + 2];
  }
  return { pixels, height: canvas.height, width: canvas.width };
}

export function drawRaw(image: RawImage, canvas: HTMLCanvasElement): void {
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");
  const data = ctx.createImageData(image.width, image.height);
  for (let i = 0; i < image.width * image.height; i++) {
    data.data[4 * i] = image.pixels[3 * i];
    data.data[4 * i + 1] = image.pixels[3 * i + 1];
    data.data[4 * i + 2] = image.pixels[3 * i + 2];
    data.data[4 * i + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
}

export async function rawFromPngB64(b64: string, width: number, height: number): Promise<RawImage> {
  const img = new Image();
  img.src = `data:image/png;base64,${b64}`;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0, width, height);
  return rawFromCanvas(canvas);
}

export function pngB64FromRaw(image: RawImage): string {
  const canvas = document.createElement("canvas");
  drawRaw(image, canvas);
  const url = canvas.toDataURL("image/png");
  return url.slice(url.indexOf(",") + 1);
}

/** Single-channel mask PNG: 0 = keep, 255 = edit. */
export function maskPngB64(mask: Uint8Array, width: number, height: number): string {
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d")!;
  const data = ctx.createImageData(width, height);
  for (let i = 0; i < width * height; i++) {
    const v = mask[i] ? 255 : 0;
    data.data[4 * i] = v;
    data.data[4 * i + 1] = v;
    data.data[4 * i + 2] = v;
    data.data[4 * i + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
  const url = canvas.toDataURL("image/png");
  return url.slice(url.indexOf(",") + 1);
}
