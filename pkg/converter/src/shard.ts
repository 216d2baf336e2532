/**
 * Binary shard format for labeled I/Q frames (bit-compatible with the Python
 * toolkit's reader). Little-endian layout:
 *
 *   magic         4 bytes  "IQS1"
 *   version       u16      (1)
 *   frame_count   u32
 *   frame_length  u32
 *   num_classes   u16
 *   label_names   num_classes x (u16 byte length + UTF-8 bytes)
 *   frames        frame_count records of
 *                   label  u8   (index into label_names)
 *                   snr_db i8
 *                   i      frame_length f32
 *                   q      frame_length f32
 */

import * as fs from "node:fs";

export const MAGIC = "IQS1";
export const VERSION = 1;

export interface Frame {
  label: number;
  snrDb: number;
  i: Float32Array;
  q: Float32Array;
}

export interface ShardContents {
  frameLength: number;
  labelNames: string[];
  frames: Frame[];
}

export function headerBytes(frameLength: number, labelNames: string[], frameCount: number): Buffer {
  const encoded = labelNames.map((n) => Buffer.from(n, "utf-8"));
  const size = 4 + 2 + 4 + 4 + 2 + encoded.reduce((acc, b) => acc + 2 + b.length, 0);
  const buf = Buffer.alloc(size);
  let off = 0;
  buf.write(MAGIC, off, "ascii");
  off += 4;
  off = buf.writeUInt16LE(VERSION, off);
  off = buf.writeUInt32LE(frameCount, off);
  off = buf.writeUInt32LE(frameLength, off);
  off = buf.writeUInt16LE(labelNames.length, off);
  for (const name of encoded) {
    off = buf.writeUInt16LE(name.length, off);
    off += name.copy(buf, off);
  }
  return buf;
}

export function writeShard(path: string, contents: ShardContents): number {
  const { frameLength, labelNames, frames } = contents;
  if (frames.length === 0) throw new Error("no frames to write");
  for (const f of frames) {
    if (f.i.length !== frameLength || f.q.length !== frameLength) {
      throw new Error("heterogeneous frame lengths");
    }
    if (f.label < 0 || f.label >= labelNames.length) {
      throw new Error(`label ${f.label} outside the label table`);
    }
  }
  const record = 2 + 8 * frameLength;
  const header = headerBytes(frameLength, labelNames, frames.length);
  const body = Buffer.alloc(record * frames.length);
  let off = 0;
  for (const f of frames) {
    off = body.writeUInt8(f.label, off);
    off = body.writeInt8(f.snrDb, off);
    body.set(Buffer.from(f.i.buffer, f.i.byteOffset, 4 * frameLength), off);
    off += 4 * frameLength;
    body.set(Buffer.from(f.q.buffer, f.q.byteOffset, 4 * frameLength), off);
    off += 4 * frameLength;
  }
  fs.writeFileSync(path, Buffer.concat([header, body]));
  return frames.length;
}

export function readShard(path: string): ShardContents {
  const buf = fs.readFileSync(path);
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad shard magic in ${path}`);
  }
  let off = 4;
  const version = buf.readUInt16LE(off);
  off += 2;
  if (version !== VERSION) throw new Error(`unsupported shard version ${version}`);
  const frameCount = buf.readUInt32LE(off);
  off += 4;
  const frameLength = buf.readUInt32LE(off);
  off += 4;
  const numClasses = buf.readUInt16LE(off);
  off += 2;
  const labelNames: string[] = [];
  for (let c = 0; c < numClasses; c++) {
    const len = buf.readUInt16LE(off);
    off += 2;
    labelNames.push(buf.toString("utf-8", off, off + len));
    off += len;
  }
  const record = 2 + 8 * frameLength;
  if (buf.length !== off + record * frameCount) {
    throw new Error(`truncated shard: expected ${frameCount} frames`);
  }
  const frames: Frame[] = [];
  for (let n = 0; n < frameCount; n++) {
    const label = buf.readUInt8(off);
    const snrDb = buf.readInt8(off + 1);
    const i = new Float32Array(frameLength);
    const q = new Float32Array(frameLength);
    // copy via byte views so f32 bit patterns survive untouched
    Buffer.from(i.buffer).set(buf.subarray(off + 2, off + 2 + 4 * frameLength));
    Buffer.from(q.buffer).set(
      buf.subarray(off + 2 + 4 * frameLength, off + 2 + 8 * frameLength),
    );
    frames.push({ label, snrDb, i, q });
    off += record;
  }
  return { frameLength, labelNames, frames };
}
