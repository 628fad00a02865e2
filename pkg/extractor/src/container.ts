/**
 * Embedding container I/O, byte-compatible with the engine's format.
 *
 * Layout (little-endian): magic "FCCD" | u16 version=1 | u16 flags
 * (bit 0 = labels present) | u64 count | u32 dim | u32 padding=0 |
 * count*dim float32 row-major | count int32 labels when flagged.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "FCCD";
export const VERSION = 1;
const FLAG_LABELS = 0x0001;
const HEADER_SIZE = 24;

export interface EmbeddingContainer {
  count: number;
  dim: number;
  /** Row-major count*dim features. */
  data: Float32Array;
  /** Class IDs >= 0 (-1 marks an unlabeled row), or null. */
  labels: Int32Array | null;
}

export class ContainerFormatError extends Error {
  constructor(message: string, readonly offset: number) {
    super(`${message} (byte offset ${offset})`);
  }
}

export function encodeContainer(c: EmbeddingContainer): Buffer {
  if (c.count < 1 || c.dim < 1) {
    throw new Error(`container must be non-empty, got ${c.count}x${c.dim}`);
  }
  if (c.data.length !== c.count * c.dim) {
    throw new Error(`data length ${c.data.length} != ${c.count}*${c.dim}`);
  }
  if (c.labels !== null && c.labels.length !== c.count) {
    throw new Error(`labels length ${c.labels.length} != count ${c.count}`);
  }
  const flags = c.labels !== null ? FLAG_LABELS : 0;
  const size = HEADER_SIZE + c.data.length * 4 + (c.labels?.length ?? 0) * 4;
  const buf = Buffer.alloc(size);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  buf.write(MAGIC, 0, "ascii");
  view.setUint16(4, VERSION, true);
  view.setUint16(6, flags, true);
  view.setBigUint64(8, BigInt(c.count), true);
  view.setUint32(16, c.dim, true);
  view.setUint32(20, 0, true);
  let pos = HEADER_SIZE;
  for (const value of c.data) {
    if (!Number.isFinite(value)) {
      throw new Error("container data must be finite");
    }
    view.setFloat32(pos, value, true);
    pos += 4;
  }
  if (c.labels !== null) {
    for (const label of c.labels) {
      view.setInt32(pos, label, true);
      pos += 4;
    }
  }
  return buf;
}

export function decodeContainer(buf: Buffer): EmbeddingContainer {
  if (buf.length < HEADER_SIZE) {
    throw new ContainerFormatError("file too short for header", buf.length);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new ContainerFormatError("bad magic", 0);
  }
  if (view.getUint16(4, true) !== VERSION) {
    throw new ContainerFormatError("unsupported version", 4);
  }
  const flags = view.getUint16(6, true);
  if ((flags & ~FLAG_LABELS) !== 0) {
    throw new ContainerFormatError("unknown flag bits", 6);
  }
  const count = Number(view.getBigUint64(8, true));
  const dim = view.getUint32(16, true);
  if (count < 1) throw new ContainerFormatError("count must be >= 1", 8);
  if (dim < 1) throw new ContainerFormatError("dim must be >= 1", 16);
  if (view.getUint32(20, true) !== 0) {
    throw new ContainerFormatError("padding must be zero", 20);
  }
  const hasLabels = (flags & FLAG_LABELS) !== 0;
  const expected = HEADER_SIZE + count * dim * 4 + (hasLabels ? count * 4 : 0);
  if (buf.length < expected) {
    throw new ContainerFormatError("truncated payload", buf.length);
  }
  if (buf.length > expected) {
    throw new ContainerFormatError("trailing bytes after payload", expected);
  }
  const data = new Float32Array(count * dim);
  let pos = HEADER_SIZE;
  for (let i = 0; i < data.length; i++, pos += 4) {
    const value = view.getFloat32(pos, true);
    if (!Number.isFinite(value)) {
      throw new ContainerFormatError("non-finite value in data", pos);
    }
    data[i] = value;
  }
  let labels: Int32Array | null = null;
  if (hasLabels) {
    labels = new Int32Array(count);
    for (let i = 0; i < count; i++, pos += 4) {
      labels[i] = view.getInt32(pos, true);
      if (labels[i] < -1) {
        throw new ContainerFormatError(`label ${labels[i]} below -1`, pos - 4);
      }
    }
  }
  return { count, dim, data, labels };
}

export function writeContainer(path: string, c: EmbeddingContainer): void {
  writeFileSync(path, encodeContainer(c));
}

export function readContainer(path: string): EmbeddingContainer {
  return decodeContainer(readFileSync(path));
}
