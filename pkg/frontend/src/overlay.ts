// Mask compositing over the RGB preview. Pure array math so tests can verify
// that exactly the service-selected pixels are highlighted.

export function maskPixelCount(mask: Uint8Array): number {
  let count = 0;
  for (let i = 0; i < mask.length; i++) count += mask[i];
  return count;
}

/**
 * Blend a semi-transparent highlight into RGBA pixel data (row-major, 4 bytes
 * per pixel). `alpha` in [0, 1] is the overlay opacity; returns the number of
 * highlighted pixels.
 */
export function compositeOverlay(
  rgba: Uint8ClampedArray,
  mask: Uint8Array,
  alpha: number,
  color: [number, number, number],
): number {
  if (rgba.length !== mask.length * 4) {
    throw new Error(`rgba length ${rgba.length} does not match mask ${mask.length}`);
  }
  let painted = 0;
  for (let p = 0; p < mask.length; p++) {
    if (!mask[p]) continue;
    painted++;
    const base = p * 4;
    for (let c = 0; c < 3; c++) {
      rgba[base + c] = Math.round((1 - alpha) * rgba[base + c] + alpha * color[c]);
    }
  }
  return painted;
}
