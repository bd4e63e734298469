/**
 * Sliding-window patch grid, identical to the pipeline's rule.
 *
 * Offsets along each axis are multiples of `stride` up to `extent - kernel`;
 * when the stride does not divide that span, a final flush position at
 * `extent - kernel` is appended so image borders are covered. Patches are
 * indexed row-major.
 */

export interface PatchRect {
  patchIndex: number;
  x: number;
  y: number;
  kernel: number;
}

function axisOffsets(extent: number, kernel: number, stride: number): number[] {
  const last = extent - kernel;
  const offsets: number[] = [];
  for (let pos = 0; pos <= last; pos += stride) {
    offsets.push(pos);
  }
  if (offsets[offsets.length - 1] !== last) {
    offsets.push(last);
  }
  return offsets;
}

export function patchGrid(
  width: number,
  height: number,
  kernel: number,
  stride: number,
): PatchRect[] {
  if (!Number.isInteger(kernel) || kernel < 1) {
    throw new Error(`kernel must be a positive integer, got ${kernel}`);
  }
  if (!Number.isInteger(stride) || stride < 1) {
    throw new Error(`stride must be a positive integer, got ${stride}`);
  }
  if (kernel > width || kernel > height) {
    throw new Error(`kernel ${kernel} exceeds image extent ${width}x${height}`);
  }
  const xs = axisOffsets(width, kernel, stride);
  const ys = axisOffsets(height, kernel, stride);
  const patches: PatchRect[] = [];
  let index = 0;
  for (const y of ys) {
    for (const x of xs) {
      patches.push({ patchIndex: index, x, y, kernel });
      index += 1;
    }
  }
  return patches;
}
