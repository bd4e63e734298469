/**
 * Deterministic feature encoders standing in for a pretrained dual encoder.
 *
 * The sandbox cannot download model weights, so texts hash into a bag of
 * word n-grams and character trigrams, and image patches project their pixel
 * statistics through a fixed random matrix. Both are pure functions of their
 * inputs: re-running an export reproduces the file byte for byte. Swap this
 * module for a real encoder runtime without touching the export logic.
 */

export interface Rgba {
  width: number;
  height: number;
  data: Buffer | Uint8Array; // RGBA, row-major
}

/** FNV-1a 32-bit hash. */
function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i += 1) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function addHashed(vector: Float64Array, token: string): void {
  const hash = fnv1a(token);
  const index = hash % vector.length;
  const sign = (hash & 0x80000000) !== 0 ? -1 : 1;
  vector[index] += sign;
}

export function encodeText(text: string, dim: number): Float64Array {
  const vector = new Float64Array(dim);
  const tokens = text
    .toLowerCase()
    .replace(/[^a-z0-9]+/g, " ")
    .trim()
    .split(/\s+/)
    .filter((t) => t.length > 0);
  for (let i = 0; i < tokens.length; i += 1) {
    addHashed(vector, `w:${tokens[i]}`);
    if (i + 1 < tokens.length) {
      addHashed(vector, `b:${tokens[i]}_${tokens[i + 1]}`);
    }
    const padded = `^${tokens[i]}$`;
    for (let j = 0; j + 3 <= padded.length; j += 1) {
      addHashed(vector, `c:${padded.slice(j, j + 3)}`);
    }
  }
  return vector;
}

/** mulberry32: tiny deterministic PRNG for the projection matrix. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const GRID = 8; // luminance downsample resolution
const RAW_FEATURES = GRID * GRID + 3; // luminance grid + mean RGB

const projectionCache = new Map<number, Float64Array>();

function projectionMatrix(dim: number): Float64Array {
  let matrix = projectionCache.get(dim);
  if (!matrix) {
    const rand = mulberry32(0x5eed + dim);
    matrix = new Float64Array(dim * RAW_FEATURES);
    for (let i = 0; i < matrix.length; i += 1) {
      // Box-Muller from two uniforms keeps the projection roughly isotropic.
      const u = Math.max(rand(), 1e-12);
      const v = rand();
      matrix[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
    }
    projectionCache.set(dim, matrix);
  }
  return matrix;
}

/** Pixel statistics of one kernel-sized patch, projected to `dim` values. */
export function encodePatch(
  image: Rgba,
  x: number,
  y: number,
  kernel: number,
  dim: number,
): Float64Array {
  if (x < 0 || y < 0 || x + kernel > image.width || y + kernel > image.height) {
    throw new Error(`patch (${x}, ${y}, ${kernel}) outside ${image.width}x${image.height}`);
  }
  const raw = new Float64Array(RAW_FEATURES);
  const counts = new Float64Array(GRID * GRID);
  let meanR = 0;
  let meanG = 0;
  let meanB = 0;
  for (let dy = 0; dy < kernel; dy += 1) {
    const gy = Math.min(GRID - 1, Math.floor((dy * GRID) / kernel));
    for (let dx = 0; dx < kernel; dx += 1) {
      const gx = Math.min(GRID - 1, Math.floor((dx * GRID) / kernel));
      const offset = 4 * ((y + dy) * image.width + (x + dx));
      const r = image.data[offset];
      const g = image.data[offset + 1];
      const b = image.data[offset + 2];
      const luminance = (0.299 * r + 0.587 * g + 0.114 * b) / 255;
      const cell = gy * GRID + gx;
      raw[cell] += luminance;
      counts[cell] += 1;
      meanR += r;
      meanG += g;
      meanB += b;
    }
  }
  for (let cell = 0; cell < GRID * GRID; cell += 1) {
    raw[cell] = counts[cell] > 0 ? raw[cell] / counts[cell] : 0;
  }
  const pixels = kernel * kernel;
  raw[GRID * GRID] = meanR / pixels / 255;
  raw[GRID * GRID + 1] = meanG / pixels / 255;
  raw[GRID * GRID + 2] = meanB / pixels / 255;

  const matrix = projectionMatrix(dim);
  const out = new Float64Array(dim);
  for (let row = 0; row < dim; row += 1) {
    let sum = 0;
    for (let col = 0; col < RAW_FEATURES; col += 1) {
      sum += matrix[row * RAW_FEATURES + col] * raw[col];
    }
    out[row] = sum;
  }
  return out;
}

export function unitNormalize(vector: Float64Array): Float64Array {
  let norm = 0;
  for (const value of vector) {
    norm += value * value;
  }
  norm = Math.sqrt(norm);
  if (norm === 0) {
    return vector;
  }
  const out = new Float64Array(vector.length);
  for (let i = 0; i < vector.length; i += 1) {
    out[i] = vector[i] / norm;
  }
  return out;
}

export function cosine(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i += 1) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na === 0 || nb === 0) {
    return 0;
  }
  return dot / Math.sqrt(na * nb);
}
