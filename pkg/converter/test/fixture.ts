/** Synthetic HDF5 container in the published RADIOML layout for tests. */

import h5wasm from "h5wasm/node";

import { CLASS_NAMES, FRAME_LEN } from "../src/radioml.js";

export interface FixtureSpec {
  classes: string[];
  snrs: number[];
  framesPerCell: number;
  seed?: number;
  names?: [string, string, string];
}

export interface Fixture {
  path: string;
  frameCount: number;
  labels: number[]; // class indices into CLASS_NAMES
  snrs: number[];
  /** signal value at (frame, sample, component) as float32 */
  signalAt(frame: number, sample: number, comp: number): number;
}

function lcgFloat(state: { s: number }): number {
  state.s = (Math.imul(state.s, 1664525) + 1013904223) >>> 0;
  return (state.s / 2 ** 32) * 4 - 2;
}

export async function makeFixture(path: string, spec: FixtureSpec): Promise<Fixture> {
  await h5wasm.ready;
  const [xName, yName, zName] = spec.names ?? ["X", "Y", "Z"];
  const classIdx = spec.classes.map((n) => {
    const i = (CLASS_NAMES as readonly string[]).indexOf(n);
    if (i < 0) throw new Error(`fixture class ${n} not in the published table`);
    return i;
  });
  const labels: number[] = [];
  const snrs: number[] = [];
  for (const c of classIdx) {
    for (const s of spec.snrs) {
      for (let k = 0; k < spec.framesPerCell; k++) {
        labels.push(c);
        snrs.push(s);
      }
    }
  }
  const n = labels.length;
  const state = { s: (spec.seed ?? 42) >>> 0 };
  const x = new Float32Array(n * FRAME_LEN * 2);
  for (let i = 0; i < x.length; i++) x[i] = Math.fround(lcgFloat(state));
  const y = new Float32Array(n * CLASS_NAMES.length);
  for (let i = 0; i < n; i++) y[i * CLASS_NAMES.length + labels[i]] = 1.0;
  const z = new Int32Array(snrs);

  const file = new h5wasm.File(path, "w");
  file.create_dataset({ name: xName, data: x, shape: [n, FRAME_LEN, 2], dtype: "<f" });
  file.create_dataset({ name: yName, data: y, shape: [n, CLASS_NAMES.length], dtype: "<f" });
  file.create_dataset({ name: zName, data: z, shape: [n, 1], dtype: "<i" });
  file.close();

  return {
    path,
    frameCount: n,
    labels,
    snrs,
    signalAt: (frame, sample, comp) => x[(frame * FRAME_LEN + sample) * 2 + comp],
  };
}
