/**
 * EMB1 binary embedding files, as consumed by the pipeline:
 * magic "EMB1" | dim uint32 LE | count uint32 LE | count records of
 * [id length uint32 LE, id bytes UTF-8, dim float32 LE values].
 */

import { readFileSync, writeFileSync, renameSync } from "fs";

const MAGIC = Buffer.from("EMB1", "ascii");

export type Entry = [id: string, vector: Float32Array];

export function writeEmb1(path: string, dim: number, entries: Entry[]): void {
  if (!Number.isInteger(dim) || dim < 1) {
    throw new Error(`dim must be a positive integer, got ${dim}`);
  }
  const seen = new Set<string>();
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(8);
  header.writeUInt32LE(dim, 0);
  header.writeUInt32LE(entries.length, 4);
  chunks.push(MAGIC, header);
  for (const [id, vector] of entries) {
    if (seen.has(id)) {
      throw new Error(`duplicate embedding id ${id}`);
    }
    seen.add(id);
    if (vector.length !== dim) {
      throw new Error(`dim mismatch at id ${id}: expected ${dim}, got ${vector.length}`);
    }
    for (const value of vector) {
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite value at id ${id}`);
      }
    }
    const idBytes = Buffer.from(id, "utf-8");
    const lenBuf = Buffer.alloc(4);
    lenBuf.writeUInt32LE(idBytes.length, 0);
    const vecBuf = Buffer.alloc(4 * dim);
    for (let i = 0; i < dim; i += 1) {
      vecBuf.writeFloatLE(vector[i], 4 * i);
    }
    chunks.push(lenBuf, idBytes, vecBuf);
  }
  const tmp = `${path}.tmp.${process.pid}`;
  writeFileSync(tmp, Buffer.concat(chunks));
  renameSync(tmp, path);
}

export function readEmb1(path: string): { dim: number; entries: Entry[] } {
  const data = readFileSync(path);
  if (data.length < 12 || !data.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${path}: bad magic`);
  }
  const dim = data.readUInt32LE(4);
  const count = data.readUInt32LE(8);
  const entries: Entry[] = [];
  const seen = new Set<string>();
  let offset = 12;
  for (let record = 0; record < count; record += 1) {
    if (offset + 4 > data.length) {
      throw new Error(`${path}: truncated record ${record}`);
    }
    const idLen = data.readUInt32LE(offset);
    offset += 4;
    if (offset + idLen + 4 * dim > data.length) {
      throw new Error(`${path}: truncated record ${record}`);
    }
    const id = data.subarray(offset, offset + idLen).toString("utf-8");
    offset += idLen;
    if (seen.has(id)) {
      throw new Error(`duplicate embedding id ${id}`);
    }
    seen.add(id);
    const vector = new Float32Array(dim);
    for (let i = 0; i < dim; i += 1) {
      vector[i] = data.readFloatLE(offset + 4 * i);
    }
    offset += 4 * dim;
    entries.push([id, vector]);
  }
  return { dim, entries };
}
