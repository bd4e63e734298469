import { mkdtempSync, writeFileSync } from "fs";
import { tmpdir } from "os";
import { join } from "path";

import { PNG } from "pngjs";
import { describe, expect, it } from "vitest";

import { readEmb1 } from "../src/emb1";
import { exportPatches, exportTexts } from "../src/export";
import { parseManifest } from "../src/manifest";

function writePng(path: string, width: number, height: number): void {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y += 1) {
    for (let x = 0; x < width; x += 1) {
      const offset = 4 * (y * width + x);
      png.data[offset] = (x * 255) / width;
      png.data[offset + 1] = (y * 255) / height;
      png.data[offset + 2] = ((x + y) * 255) / (width + height);
      png.data[offset + 3] = 255;
    }
  }
  writeFileSync(path, PNG.sync.write(png));
}

function setup(): { dir: string } {
  return { dir: mkdtempSync(join(tmpdir(), "export-")) };
}

describe("exportPatches", () => {
  it("one patch for a kernel-sized image, grid ids for a wider one", () => {
    const { dir } = setup();
    writePng(join(dir, "square.png"), 224, 224);
    writePng(join(dir, "wide.png"), 352, 224);
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      [
        JSON.stringify({ kind: "config", kernel: 224, stride: 64, dim: 16 }),
        JSON.stringify({ kind: "image", path: join(dir, "square.png"), id: "sq" }),
        JSON.stringify({ kind: "image", path: join(dir, "wide.png"), id: "wd" }),
      ].join("\n") + "\n",
    );
    const out = join(dir, "patches.emb1");
    const count = exportPatches(parseManifest(manifest), out);
    expect(count).toBe(4);
    const { dim, entries } = readEmb1(out);
    expect(dim).toBe(16);
    expect(entries.map(([id]) => id)).toEqual(["sq#0", "wd#0", "wd#1", "wd#2"]);
  });

  it("unit-normalizes by default and keeps raw vectors with normalize=false", () => {
    const { dir } = setup();
    writePng(join(dir, "img.png"), 224, 224);
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      JSON.stringify({ kind: "image", path: join(dir, "img.png"), id: "a" }) + "\n",
    );
    const normalized = join(dir, "n.emb1");
    exportPatches(parseManifest(manifest), normalized, { dim: 8 });
    const [, vector] = readEmb1(normalized).entries[0];
    const norm = Math.sqrt([...vector].reduce((acc, v) => acc + v * v, 0));
    expect(norm).toBeCloseTo(1.0, 5);

    const raw = join(dir, "r.emb1");
    exportPatches(parseManifest(manifest), raw, { dim: 8, normalize: false });
    const [, rawVector] = readEmb1(raw).entries[0];
    const rawNorm = Math.sqrt([...rawVector].reduce((acc, v) => acc + v * v, 0));
    expect(Math.abs(rawNorm - 1.0)).toBeGreaterThan(1e-3);
  });

  it("fails with a clear error on unreadable images", () => {
    const { dir } = setup();
    writeFileSync(join(dir, "broken.png"), "not a png");
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      JSON.stringify({ kind: "image", path: join(dir, "broken.png"), id: "x" }) + "\n",
    );
    expect(() => exportPatches(parseManifest(manifest), join(dir, "out.emb1"))).toThrow(
      /unreadable image/,
    );
  });
});

describe("exportTexts", () => {
  it("encodes captions verbatim in manifest order", () => {
    const { dir } = setup();
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      [
        JSON.stringify({ kind: "text", text: "deep dish pizza", id: "t2" }),
        JSON.stringify({ kind: "text", text: "a cat", id: "t1" }),
      ].join("\n") + "\n",
    );
    const out = join(dir, "texts.emb1");
    const count = exportTexts(parseManifest(manifest), out, { dim: 32 });
    expect(count).toBe(2);
    expect(readEmb1(out).entries.map(([id]) => id)).toEqual(["t2", "t1"]);
  });

  it("empty manifest produces a valid count-0 file", () => {
    const { dir } = setup();
    const manifest = join(dir, "m.jsonl");
    writeFileSync(manifest, "\n");
    const out = join(dir, "texts.emb1");
    expect(exportTexts(parseManifest(manifest), out)).toBe(0);
    expect(readEmb1(out).entries).toEqual([]);
  });

  it("duplicate manifest ids are rejected", () => {
    const { dir } = setup();
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      [
        JSON.stringify({ kind: "text", text: "one", id: "t" }),
        JSON.stringify({ kind: "text", text: "two", id: "t" }),
      ].join("\n") + "\n",
    );
    expect(() => parseManifest(manifest)).toThrow(/duplicate id t/);
  });

  it("export is deterministic byte for byte", () => {
    const { dir } = setup();
    const manifest = join(dir, "m.jsonl");
    writeFileSync(
      manifest,
      JSON.stringify({ kind: "text", text: "same words every run", id: "t" }) + "\n",
    );
    const a = join(dir, "a.emb1");
    const b = join(dir, "b.emb1");
    exportTexts(parseManifest(manifest), a);
    exportTexts(parseManifest(manifest), b);
    const fs = require("fs");
    expect(fs.readFileSync(a).equals(fs.readFileSync(b))).toBe(true);
  });
});
