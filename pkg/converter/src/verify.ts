/**
 * Exact-fidelity verification: sample shard frames, re-open the HDF5 source,
 * and compare float32 bit patterns. Any mismatch fails the check.
 *
 * Conversion keeps frames in source order, so the shard index -> source row
 * mapping is recomputed from the manifest's filter instead of being stored.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { computeKeptRows, type Manifest } from "./convert.js";
import { FRAME_LEN, openRadioml } from "./radioml.js";
import { MAGIC, VERSION } from "./shard.js";

export interface VerifyReport {
  sampled: number;
  mismatches: number;
  checkedShards: number;
}

interface ShardIndex {
  path: string;
  frameCount: number;
  dataOffset: number;
  recordSize: number;
}

function indexShard(shardPath: string): ShardIndex {
  const fd = fs.openSync(shardPath, "r");
  try {
    const head = Buffer.alloc(16);
    fs.readSync(fd, head, 0, 16, 0);
    if (head.toString("ascii", 0, 4) !== MAGIC) throw new Error(`bad magic in ${shardPath}`);
    if (head.readUInt16LE(4) !== VERSION) throw new Error("unsupported shard version");
    const frameCount = head.readUInt32LE(6);
    const frameLength = head.readUInt32LE(10);
    const numClasses = head.readUInt16LE(14);
    if (frameLength !== FRAME_LEN) throw new Error(`unexpected frame length ${frameLength}`);
    let off = 16;
    const lenBuf = Buffer.alloc(2);
    for (let c = 0; c < numClasses; c++) {
      fs.readSync(fd, lenBuf, 0, 2, off);
      off += 2 + lenBuf.readUInt16LE(0);
    }
    return { path: shardPath, frameCount, dataOffset: off, recordSize: 2 + 8 * FRAME_LEN };
  } finally {
    fs.closeSync(fd);
  }
}

function readFrameAt(index: ShardIndex, frame: number): Buffer {
  const fd = fs.openSync(index.path, "r");
  try {
    const buf = Buffer.alloc(index.recordSize);
    fs.readSync(fd, buf, 0, index.recordSize, index.dataOffset + frame * index.recordSize);
    return buf;
  } finally {
    fs.closeSync(fd);
  }
}

/** Deterministic 32-bit LCG so samples are reproducible per seed. */
function* lcg(seed: number): Generator<number> {
  let state = seed >>> 0;
  for (;;) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    yield state;
  }
}

export async function verify(
  shardDir: string,
  sampleSize: number,
  sourcePath?: string,
  seed = 1,
): Promise<VerifyReport> {
  const manifestPath = path.join(shardDir, "manifest.json");
  if (!fs.existsSync(manifestPath)) {
    throw new Error(`no manifest.json under ${shardDir}`);
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8")) as Manifest;
  if (!manifest.shards?.length) throw new Error("manifest lists no shards");
  const indexes = manifest.shards.map((name) => indexShard(path.join(shardDir, name)));
  const total = indexes.reduce((acc, s) => acc + s.frameCount, 0);
  if (total !== manifest.frame_count) {
    throw new Error(`shards hold ${total} frames but manifest says ${manifest.frame_count}`);
  }

  const source = await openRadioml(sourcePath ?? manifest.source_file);
  try {
    const { rows, dense } = computeKeptRows(source.labels, source.snrs, manifest.filter);
    if (rows.length !== total) {
      throw new Error(
        `recomputed filter keeps ${rows.length} frames but shards hold ${total}`,
      );
    }
    const starts: number[] = [];
    let acc = 0;
    for (const s of indexes) {
      starts.push(acc);
      acc += s.frameCount;
    }
    // full sweep once the sample budget covers every frame; otherwise draw
    // reproducible random probes (with replacement)
    const rng = lcg(seed);
    const n = Math.min(sampleSize, total);
    const full = sampleSize >= total;
    let mismatches = 0;
    for (let probe = 0; probe < n; probe++) {
      const g = full ? probe : rng.next().value % total;
      let shard = starts.length - 1;
      while (starts[shard] > g) shard--;
      const record = readFrameAt(indexes[shard], g - starts[shard]);
      const sourceRow = rows[g];
      const expected = source.readSignals(sourceRow, sourceRow + 1);
      let bad = record.readUInt8(0) !== dense[g] || record.readInt8(1) !== source.snrs[sourceRow];
      if (!bad) {
        const got = new Uint32Array(FRAME_LEN * 2);
        Buffer.from(got.buffer).set(record.subarray(2));
        const want = new Uint32Array(expected.buffer, expected.byteOffset, FRAME_LEN * 2);
        for (let s = 0; s < FRAME_LEN && !bad; s++) {
          // shard layout is I block then Q block; source interleaves I/Q
          if (got[s] !== want[2 * s] || got[FRAME_LEN + s] !== want[2 * s + 1]) bad = true;
        }
      }
      if (bad) mismatches++;
    }
    return { sampled: n, mismatches, checkedShards: indexes.length };
  } finally {
    source.close();
  }
}
