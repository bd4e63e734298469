import { describe, expect, it } from "vitest";

import { cosine, encodePatch, encodeText, unitNormalize, Rgba } from "../src/encoders";

function solidImage(width: number, height: number, rgb: [number, number, number]): Rgba {
  const data = Buffer.alloc(4 * width * height);
  for (let i = 0; i < width * height; i += 1) {
    data[4 * i] = rgb[0];
    data[4 * i + 1] = rgb[1];
    data[4 * i + 2] = rgb[2];
    data[4 * i + 3] = 255;
  }
  return { width, height, data };
}

describe("text encoder", () => {
  it("is deterministic", () => {
    const a = encodeText("a photo of a dog", 64);
    const b = encodeText("a photo of a dog", 64);
    expect([...a]).toEqual([...b]);
  });

  it("ranks a paraphrase above an unrelated text", () => {
    const anchor = encodeText("dog photo", 64);
    const paraphrase = encodeText("a photo of a dog", 64);
    const unrelated = encodeText("stock market chart", 64);
    expect(cosine(anchor, paraphrase)).toBeGreaterThan(cosine(anchor, unrelated));
  });

  it("keeps the ordering across dimensions", () => {
    for (const dim of [32, 64, 128]) {
      const anchor = encodeText("red brick lighthouse", dim);
      const close = encodeText("a lighthouse of red brick", dim);
      const far = encodeText("quarterly revenue spreadsheet", dim);
      expect(cosine(anchor, close)).toBeGreaterThan(cosine(anchor, far));
    }
  });

  it("unit normalization yields norm one", () => {
    const vector = unitNormalize(encodeText("some words here", 64));
    let norm = 0;
    for (const value of vector) norm += value * value;
    expect(Math.sqrt(norm)).toBeCloseTo(1.0, 10);
  });
});

describe("patch encoder", () => {
  it("is deterministic and position-sensitive", () => {
    const image = solidImage(64, 48, [200, 30, 30]);
    // paint a bright square in the top-left quadrant
    for (let y = 0; y < 16; y += 1) {
      for (let x = 0; x < 16; x += 1) {
        const offset = 4 * (y * 64 + x);
        image.data[offset] = 255;
        image.data[offset + 1] = 255;
        image.data[offset + 2] = 255;
      }
    }
    const a = encodePatch(image, 0, 0, 32, 16);
    const b = encodePatch(image, 0, 0, 32, 16);
    const other = encodePatch(image, 32, 0, 32, 16);
    expect([...a]).toEqual([...b]);
    expect(cosine(a, other)).toBeLessThan(0.999999);
  });

  it("distinguishes colors", () => {
    const red = encodePatch(solidImage(32, 32, [255, 0, 0]), 0, 0, 32, 16);
    const blue = encodePatch(solidImage(32, 32, [0, 0, 255]), 0, 0, 32, 16);
    expect(cosine(red, blue)).toBeLessThan(0.999);
  });

  it("rejects out-of-bounds patches", () => {
    const image = solidImage(32, 32, [0, 0, 0]);
    expect(() => encodePatch(image, 8, 8, 32, 16)).toThrow(/outside/);
  });
});
