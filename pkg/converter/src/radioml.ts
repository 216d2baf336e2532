/**
 * Access to the RADIOML 2018.01A HDF5 container.
 *
 * The published layout stores three arrays: signals [N, 1024, 2] float32,
 * one-hot labels [N, 24], and per-frame SNR [N, 1]. Mirrors differ in the
 * dataset names, so the opener probes the known variants and reports which
 * one matched.
 */

import h5wasm, { Dataset } from "h5wasm/node";

export const CLASS_NAMES = [
  "OOK", "4ASK", "8ASK", "BPSK", "QPSK", "8PSK", "16PSK", "32PSK",
  "16APSK", "32APSK", "64APSK", "128APSK", "16QAM", "32QAM", "64QAM",
  "128QAM", "256QAM", "AM-SSB-WC", "AM-SSB-SC", "AM-DSB-WC", "AM-DSB-SC",
  "FM", "GMSK", "OQPSK",
] as const;

export const FRAME_LEN = 1024;

const NAME_VARIANTS: Array<[string, string, string]> = [
  ["X", "Y", "Z"],
  ["signals", "labels", "snrs"],
  ["x", "y", "z"],
];

export interface RadiomlSource {
  frameCount: number;
  layout: string;
  /** labels[n] = class index decoded from the one-hot rows */
  labels: Int32Array;
  /** snrs[n] in dB */
  snrs: Int32Array;
  /** Read frames [start, end) as interleaved [n][1024][2] float32. */
  readSignals(start: number, end: number): Float32Array;
  close(): void;
}

function decodeOneHot(rows: ArrayLike<number>, n: number, k: number): Int32Array {
  const out = new Int32Array(n);
  for (let i = 0; i < n; i++) {
    let best = 0;
    let bestVal = -Infinity;
    for (let c = 0; c < k; c++) {
      const v = Number(rows[i * k + c]);
      if (v > bestVal) {
        bestVal = v;
        best = c;
      }
    }
    out[i] = best;
  }
  return out;
}

export async function openRadioml(path: string): Promise<RadiomlSource> {
  await h5wasm.ready;
  const file = new h5wasm.File(path, "r");
  const keys = new Set(file.keys());
  const variant = NAME_VARIANTS.find((v) => v.every((name) => keys.has(name)));
  if (!variant) {
    file.close();
    throw new Error(
      `no known dataset layout in ${path}; found keys [${[...keys].join(", ")}]`,
    );
  }
  const [xName, yName, zName] = variant;
  const x = file.get(xName) as Dataset;
  const y = file.get(yName) as Dataset;
  const z = file.get(zName) as Dataset;
  const xShape = x.shape ?? [];
  const yShape = y.shape ?? [];
  const zShape = z.shape ?? [];
  const [n, frameLen, comps] = xShape;
  if (frameLen !== FRAME_LEN || comps !== 2) {
    file.close();
    throw new Error(`unexpected signal shape [${xShape.join(", ")}]`);
  }
  const k = yShape[1];
  if (yShape[0] !== n || zShape[0] !== n) {
    file.close();
    throw new Error("signals/labels/snr arrays disagree on frame count");
  }
  const labels = decodeOneHot(y.value as ArrayLike<number>, n, k);
  const zRaw = z.value as ArrayLike<number>;
  const snrs = new Int32Array(n);
  for (let i = 0; i < n; i++) snrs[i] = Number(zRaw[i]);
  return {
    frameCount: n,
    layout: `${xName}/${yName}/${zName}`,
    labels,
    snrs,
    readSignals(start: number, end: number): Float32Array {
      const out = x.slice([[start, end]]) as Float32Array;
      if (!(out instanceof Float32Array)) {
        throw new Error(`expected float32 signals, got ${x.dtype}`);
      }
      return out;
    },
    close() {
      file.close();
    },
  };
}
