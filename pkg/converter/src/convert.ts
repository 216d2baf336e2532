/**
 * Streaming conversion from the RADIOML HDF5 container to shard files.
 *
 * Frames are kept in source order, filtered by class subset / SNR range /
 * per-cell cap, relabeled densely over the selected classes, and written
 * with at most one shard buffered in memory. The same filter is recomputable
 * from the manifest, which is what exact verification relies on.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { CLASS_NAMES, FRAME_LEN, openRadioml } from "./radioml.js";
import { writeShard, type Frame } from "./shard.js";

export interface ConverterConfig {
  input: string;
  outDir: string;
  /** class-name subset; default: all 24 in published order */
  classes?: string[];
  snrMin?: number;
  snrMax?: number;
  maxFramesPerCell?: number;
  /** frames per shard file */
  shardSize?: number;
}

export interface FilterSpec {
  classes: string[];
  snrMin: number | null;
  snrMax: number | null;
  maxFramesPerCell: number | null;
}

export interface Manifest {
  source_file: string;
  matched_layout: string;
  modes: string[];
  frame_count: number;
  cells: Record<string, number>;
  shards: string[];
  shard_size: number;
  filter: FilterSpec;
}

export function normalizeFilter(cfg: ConverterConfig): FilterSpec {
  const classes = cfg.classes && cfg.classes.length ? cfg.classes : [...CLASS_NAMES];
  for (const name of classes) {
    if (!(CLASS_NAMES as readonly string[]).includes(name)) {
      throw new Error(`unknown class ${name}`);
    }
  }
  // dense relabeling follows the published class order, not the flag order
  const ordered = CLASS_NAMES.filter((n) => classes.includes(n));
  return {
    classes: [...ordered],
    snrMin: cfg.snrMin ?? null,
    snrMax: cfg.snrMax ?? null,
    maxFramesPerCell: cfg.maxFramesPerCell ?? null,
  };
}

/** Source rows that survive the filter, in source order. */
export function computeKeptRows(
  labels: Int32Array,
  snrs: Int32Array,
  filter: FilterSpec,
): { rows: number[]; dense: Int32Array; cells: Record<string, number> } {
  const classIndex = new Map<number, number>();
  filter.classes.forEach((name, dense) => {
    classIndex.set((CLASS_NAMES as readonly string[]).indexOf(name), dense);
  });
  const cellCounts = new Map<string, number>();
  const rows: number[] = [];
  const denseLabels: number[] = [];
  for (let n = 0; n < labels.length; n++) {
    const dense = classIndex.get(labels[n]);
    if (dense === undefined) continue;
    const snr = snrs[n];
    if (filter.snrMin !== null && snr < filter.snrMin) continue;
    if (filter.snrMax !== null && snr > filter.snrMax) continue;
    const cell = `${filter.classes[dense]}/${snr}`;
    const count = cellCounts.get(cell) ?? 0;
    if (filter.maxFramesPerCell !== null && count >= filter.maxFramesPerCell) continue;
    cellCounts.set(cell, count + 1);
    rows.push(n);
    denseLabels.push(dense);
  }
  return {
    rows,
    dense: Int32Array.from(denseLabels),
    cells: Object.fromEntries([...cellCounts.entries()].sort()),
  };
}

const READ_CHUNK = 512; // source frames per HDF5 read

export async function convert(cfg: ConverterConfig): Promise<Manifest> {
  const source = await openRadioml(cfg.input);
  try {
    const filter = normalizeFilter(cfg);
    const { rows, dense, cells } = computeKeptRows(source.labels, source.snrs, filter);
    if (rows.length === 0) throw new Error("filter keeps no frames");
    const shardSize = cfg.shardSize ?? 4096;
    fs.mkdirSync(cfg.outDir, { recursive: true });

    const shards: string[] = [];
    let buffer: Frame[] = [];
    const flush = () => {
      if (!buffer.length) return;
      const name = `data_${String(shards.length).padStart(3, "0")}.iqs`;
      writeShard(path.join(cfg.outDir, name), {
        frameLength: FRAME_LEN,
        labelNames: filter.classes,
        frames: buffer,
      });
      shards.push(name);
      buffer = [];
    };

    let cursor = 0;
    while (cursor < rows.length) {
      // run of kept rows close enough together to serve from one chunked read
      const start = rows[cursor];
      let end = cursor;
      while (end + 1 < rows.length && rows[end + 1] < start + READ_CHUNK) {
        end++;
      }
      const last = rows[end];
      const block = source.readSignals(start, last + 1);
      for (let c = cursor; c <= end; c++) {
        const offset = (rows[c] - start) * FRAME_LEN * 2;
        const i = new Float32Array(FRAME_LEN);
        const q = new Float32Array(FRAME_LEN);
        for (let s = 0; s < FRAME_LEN; s++) {
          i[s] = block[offset + 2 * s];
          q[s] = block[offset + 2 * s + 1];
        }
        buffer.push({ label: dense[c], snrDb: source.snrs[rows[c]], i, q });
        if (buffer.length >= shardSize) flush();
      }
      cursor = end + 1;
    }
    flush();

    const manifest: Manifest = {
      source_file: path.resolve(cfg.input),
      matched_layout: source.layout,
      modes: filter.classes,
      frame_count: rows.length,
      cells,
      shards,
      shard_size: shardSize,
      filter,
    };
    const manifestPath = path.join(cfg.outDir, "manifest.json");
    fs.writeFileSync(manifestPath + ".tmp", JSON.stringify(manifest, null, 2) + "\n");
    fs.renameSync(manifestPath + ".tmp", manifestPath);
    return manifest;
  } finally {
    source.close();
  }
}
