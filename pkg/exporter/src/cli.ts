#!/usr/bin/env node
/**
 * Exporter CLI.
 *
 *   export-detections --clip <clip.json> --out-dir <dir>
 *                     [--class-names a,b,c] [--crop-padding N]
 *                     [--mask-model builtin:components]
 *                     [--encoder builtin:projection] [--dim 16]
 *   export-class-table --class-names a,b,c --out <table.json>
 *                     [--encoder builtin:projection] [--dim 16]
 *
 * Emits exactly the pipeline's interchange formats. Objectness is not
 * thresholded at export time: the raw dump keeps all proposals so that every
 * filtering decision stays downstream and auditable.
 */

import * as fs from "fs";

import { makeEncoder, makeMaskGenerator } from "./backends";
import { exportClassTable, exportDetections, loadClip, writeDataset } from "./export";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    const dim = parseInt(flags.get("dim") ?? "16", 10);
    const encoder = makeEncoder(flags.get("encoder") ?? "builtin:projection", dim);
    if (command === "export-detections") {
      const clipPath = flags.get("clip");
      const outDir = flags.get("out-dir");
      if (!clipPath || !outDir) throw new Error("--clip and --out-dir are required");
      const clip = loadClip(clipPath);
      const maskGen = makeMaskGenerator(flags.get("mask-model") ?? "builtin:components");
      const classNames = (flags.get("class-names") ?? "").split(",").filter(Boolean);
      const { manifest, detections } = exportDetections(clip, maskGen, encoder, {
        cropPadding: parseInt(flags.get("crop-padding") ?? "0", 10),
        classNames,
      });
      writeDataset(outDir, manifest, detections);
      console.error(`wrote ${detections.length} detections for ${clip.frames.length} frames -> ${outDir}`);
      return 0;
    }
    if (command === "export-class-table") {
      const names = (flags.get("class-names") ?? "").split(",").filter(Boolean);
      const out = flags.get("out");
      if (!out) throw new Error("--out is required");
      const table = exportClassTable(names, encoder);
      fs.writeFileSync(out, JSON.stringify(table, null, 2) + "\n");
      console.error(`wrote ${names.length}-class table -> ${out}`);
      return 0;
    }
    console.error("usage: cli.ts export-detections|export-class-table [flags]");
    return 2;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

export { main };
