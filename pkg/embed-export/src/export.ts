/**
 * Export image-patch and text embeddings into EMB1 files.
 *
 * Patch embeddings follow the pipeline's grid rule exactly (including the
 * flush patch at each border) and carry ids `<image_id>#<patch_index>`, so
 * the files drop straight into the retrieval stage. Vectors are
 * unit-normalized by default, making inner product equal cosine; pass
 * `normalize: false` to keep raw encoder outputs.
 */

import { readFileSync } from "fs";
import { PNG } from "pngjs";

import { writeEmb1, Entry } from "./emb1";
import { encodePatch, encodeText, unitNormalize, Rgba } from "./encoders";
import { patchGrid } from "./grid";
import { Manifest } from "./manifest";

export interface ExportOptions {
  kernel: number;
  stride: number;
  dim: number;
  normalize: boolean;
}

export const DEFAULT_OPTIONS: ExportOptions = {
  kernel: 224,
  stride: 64,
  dim: 64,
  normalize: true,
};

/** Explicit options beat the manifest's config line, which beats defaults. */
function resolveOptions(manifest: Manifest, options: Partial<ExportOptions>): ExportOptions {
  return {
    kernel: options.kernel ?? manifest.kernel ?? DEFAULT_OPTIONS.kernel,
    stride: options.stride ?? manifest.stride ?? DEFAULT_OPTIONS.stride,
    dim: options.dim ?? manifest.dim ?? DEFAULT_OPTIONS.dim,
    normalize: options.normalize ?? DEFAULT_OPTIONS.normalize,
  };
}

export function readPng(path: string): Rgba {
  let png: PNG;
  try {
    png = PNG.sync.read(readFileSync(path));
  } catch (error) {
    throw new Error(`unreadable image ${path}: ${error}`);
  }
  return { width: png.width, height: png.height, data: png.data };
}

function finish(vector: Float64Array, normalize: boolean): Float32Array {
  const prepared = normalize ? unitNormalize(vector) : vector;
  return Float32Array.from(prepared);
}

export function exportPatches(
  manifest: Manifest,
  outPath: string,
  options: Partial<ExportOptions> = {},
): number {
  const opts = resolveOptions(manifest, options);
  const entries: Entry[] = [];
  for (const item of manifest.images) {
    const image = readPng(item.path);
    const grid = patchGrid(image.width, image.height, opts.kernel, opts.stride);
    for (const rect of grid) {
      const vector = encodePatch(image, rect.x, rect.y, rect.kernel, opts.dim);
      entries.push([`${item.id}#${rect.patchIndex}`, finish(vector, opts.normalize)]);
    }
  }
  writeEmb1(outPath, opts.dim, entries);
  return entries.length;
}

export function exportTexts(
  manifest: Manifest,
  outPath: string,
  options: Partial<ExportOptions> = {},
): number {
  const opts = resolveOptions(manifest, options);
  const entries: Entry[] = [];
  for (const item of manifest.texts) {
    const vector = encodeText(item.text, opts.dim);
    entries.push([item.id, finish(vector, opts.normalize)]);
  }
  writeEmb1(outPath, opts.dim, entries);
  return entries.length;
}
