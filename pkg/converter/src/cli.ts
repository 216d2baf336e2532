#!/usr/bin/env node
/**
 * radioml-convert convert --input GOLD_XYZ_OSC.0001_1024.hdf5 --out shards/
 *     [--classes 16QAM,64QAM,...] [--snr-min N] [--snr-max N]
 *     [--max-frames-per-cell N] [--shard-size N]
 * radioml-convert verify --shards shards/ --sample 1000 [--input file.hdf5]
 */

import { parseArgs } from "node:util";

import { convert } from "./convert.js";
import { verify } from "./verify.js";

function usage(code: number): never {
  console.error(
    "usage: radioml-convert convert --input <hdf5> --out <dir> [filters]\n" +
      "       radioml-convert verify --shards <dir> --sample <n> [--input <hdf5>]",
  );
  process.exit(code);
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  if (command === "convert") {
    const { values } = parseArgs({
      args: rest,
      options: {
        input: { type: "string" },
        out: { type: "string" },
        classes: { type: "string" },
        "snr-min": { type: "string" },
        "snr-max": { type: "string" },
        "max-frames-per-cell": { type: "string" },
        "shard-size": { type: "string" },
      },
    });
    if (!values.input || !values.out) usage(1);
    const manifest = await convert({
      input: values.input,
      outDir: values.out,
      classes: values.classes?.split(",").map((s) => s.trim()).filter(Boolean),
      snrMin: values["snr-min"] !== undefined ? Number(values["snr-min"]) : undefined,
      snrMax: values["snr-max"] !== undefined ? Number(values["snr-max"]) : undefined,
      maxFramesPerCell:
        values["max-frames-per-cell"] !== undefined
          ? Number(values["max-frames-per-cell"])
          : undefined,
      shardSize: values["shard-size"] !== undefined ? Number(values["shard-size"]) : undefined,
    });
    console.log(
      `converted ${manifest.frame_count} frames (${manifest.modes.length} classes, ` +
        `layout ${manifest.matched_layout}) into ${manifest.shards.length} shard(s)`,
    );
    return 0;
  }
  if (command === "verify") {
    const { values } = parseArgs({
      args: rest,
      options: {
        shards: { type: "string" },
        sample: { type: "string" },
        input: { type: "string" },
        seed: { type: "string" },
      },
    });
    if (!values.shards) usage(1);
    const report = await verify(
      values.shards,
      values.sample !== undefined ? Number(values.sample) : 1000,
      values.input,
      values.seed !== undefined ? Number(values.seed) : 1,
    );
    console.log(
      `verified ${report.sampled} sampled frames over ${report.checkedShards} shard(s): ` +
        `${report.mismatches} mismatches`,
    );
    return report.mismatches === 0 ? 0 : 1;
  }
  usage(1);
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  },
);
