/**
 * Export manifests: JSON Lines with one optional config line and one line
 * per item.
 *
 *   {"kind": "config", "kernel": 224, "stride": 64, "dim": 64}
 *   {"kind": "image", "path": "photos/q1.png", "id": "qi0001"}
 *   {"kind": "text", "text": "a photo of a dog", "id": "c0001"}
 *
 * The kernel and stride must equal the primary pipeline's configuration or
 * patch ids will not line up; they can also be given as CLI flags.
 */

import { readFileSync } from "fs";

export interface ManifestImage {
  path: string;
  id: string;
}

export interface ManifestText {
  text: string;
  id: string;
}

export interface Manifest {
  kernel?: number;
  stride?: number;
  dim?: number;
  images: ManifestImage[];
  texts: ManifestText[];
}

export function parseManifest(path: string): Manifest {
  const manifest: Manifest = { images: [], texts: [] };
  const seenIds = new Set<string>();
  const lines = readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, index) => {
    const trimmed = line.trim();
    if (!trimmed) {
      return;
    }
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(trimmed);
    } catch (error) {
      throw new Error(`${path}:${index + 1}: malformed JSON line (${error})`);
    }
    const kind = obj.kind;
    if (kind === "config") {
      if (obj.kernel !== undefined) manifest.kernel = Number(obj.kernel);
      if (obj.stride !== undefined) manifest.stride = Number(obj.stride);
      if (obj.dim !== undefined) manifest.dim = Number(obj.dim);
      return;
    }
    if (kind === "image") {
      const id = String(obj.id ?? "");
      const imagePath = String(obj.path ?? "");
      if (!id || !imagePath) {
        throw new Error(`${path}:${index + 1}: image line needs id and path`);
      }
      if (seenIds.has(id)) {
        throw new Error(`${path}:${index + 1}: duplicate id ${id}`);
      }
      seenIds.add(id);
      manifest.images.push({ path: imagePath, id });
      return;
    }
    if (kind === "text") {
      const id = String(obj.id ?? "");
      if (!id || typeof obj.text !== "string") {
        throw new Error(`${path}:${index + 1}: text line needs id and text`);
      }
      if (seenIds.has(id)) {
        throw new Error(`${path}:${index + 1}: duplicate id ${id}`);
      }
      seenIds.add(id);
      manifest.texts.push({ text: obj.text, id });
      return;
    }
    throw new Error(`${path}:${index + 1}: unknown kind ${String(kind)}`);
  });
  return manifest;
}
