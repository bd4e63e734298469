import { describe, expect, it } from "vitest";

import { patchGrid } from "../src/grid";

/** Independent re-derivation of the rule: walk positions, flush the border. */
function referenceOffsets(extent: number, kernel: number, stride: number): number[] {
  const positions = new Set<number>();
  let pos = 0;
  while (pos + kernel <= extent) {
    positions.add(pos);
    pos += stride;
  }
  positions.add(extent - kernel);
  return [...positions].sort((a, b) => a - b);
}

describe("patchGrid", () => {
  it("matches the documented hand cases", () => {
    expect(patchGrid(352, 224, 224, 64).map((p) => [p.x, p.y])).toEqual([
      [0, 0],
      [64, 0],
      [128, 0],
    ]);
    expect(patchGrid(224, 224, 224, 64).map((p) => [p.x, p.y])).toEqual([[0, 0]]);
    expect(patchGrid(300, 224, 224, 64).map((p) => p.x)).toEqual([0, 64, 76]);
  });

  it("indexes row-major", () => {
    const patches = patchGrid(300, 300, 224, 64);
    expect(patches.map((p) => p.patchIndex)).toEqual([...Array(9).keys()]);
    expect(patches[3]).toMatchObject({ x: 0, y: 64 });
  });

  it("agrees with an independent rule over a sweep, non-divisible included", () => {
    for (let width = 224; width <= 700; width += 13) {
      for (const height of [224, 250, 288, 301, 512]) {
        const xs = [...new Set(patchGrid(width, height, 224, 64).map((p) => p.x))].sort(
          (a, b) => a - b,
        );
        const ys = [...new Set(patchGrid(width, height, 224, 64).map((p) => p.y))].sort(
          (a, b) => a - b,
        );
        expect(xs).toEqual(referenceOffsets(width, 224, 64));
        expect(ys).toEqual(referenceOffsets(height, 224, 64));
      }
    }
  });

  it("keeps every patch inside the image", () => {
    for (const [w, h, k, s] of [
      [224, 224, 224, 64],
      [640, 480, 224, 64],
      [229, 225, 224, 64],
      [100, 100, 32, 7],
    ] as const) {
      for (const patch of patchGrid(w, h, k, s)) {
        expect(patch.x + k).toBeLessThanOrEqual(w);
        expect(patch.y + k).toBeLessThanOrEqual(h);
      }
    }
  });

  it("rejects kernels larger than the image", () => {
    expect(() => patchGrid(200, 300, 224, 64)).toThrow(/kernel/);
  });

  it("rejects non-positive strides", () => {
    expect(() => patchGrid(300, 300, 224, 0)).toThrow(/stride/);
  });
});
