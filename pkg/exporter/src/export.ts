import * as fs from "fs";
import * as path from "path";

import { FeatureEncoder, MaskGenerator } from "./backends";
import { ClassTableJson, DetectionJson, ManifestJson, RawClip } from "./types";

/** The class-name prompt and its six contextual variants, mean-pooled and
 * re-normalized into one table embedding per class. */
export const PROMPT_TEMPLATES = [
  (c: string) => `a photo of ${c}`,
  (c: string) => `a photo of ${c} doing`,
  (c: string) => `a photo of ${c} moving`,
  (c: string) => `a photo of ${c} with`,
  (c: string) => `a photo of ${c} on`,
  (c: string) => `a photo of ${c} in`,
  (c: string) => `a photo of ${c} at`,
];

export function loadClip(clipPath: string): RawClip {
  const doc = JSON.parse(fs.readFileSync(clipPath, "utf-8"));
  for (const key of ["video_id", "width", "height", "frames"]) {
    if (!(key in doc)) throw new Error(`clip file is missing ${key}`);
  }
  const clip = doc as RawClip;
  for (const frame of clip.frames) {
    if (frame === null) continue; // undecodable frame, skipped downstream
    if (frame.length !== clip.height || frame.some((row) => row.length !== clip.width)) {
      throw new Error("clip frame dimensions do not match the header");
    }
  }
  return clip;
}

export interface ExportOptions {
  cropPadding: number; // extra context pixels around the tight box
  classNames: string[];
}

export function exportDetections(
  clip: RawClip,
  maskGen: MaskGenerator,
  encoder: FeatureEncoder,
  options: ExportOptions,
): { manifest: ManifestJson; detections: DetectionJson[] } {
  const detections: DetectionJson[] = [];
  for (let t = 0; t < clip.frames.length; t++) {
    const frame = clip.frames[t];
    if (frame === null) {
      console.error(`warning: frame ${t} of ${clip.video_id} is undecodable, skipped`);
      continue;
    }
    for (const proposal of maskGen.propose(clip, t)) {
      const crop = cropPixels(frame, proposal.box, options.cropPadding, clip.width, clip.height);
      detections.push({
        video_id: clip.video_id,
        frame_idx: t,
        box: proposal.box,
        objectness: proposal.objectness,
        mask: { size: [clip.height, clip.width], counts: proposal.rle.counts },
        embedding: encoder.encodeImage(crop, clip.width, clip.height),
      });
    }
  }
  const manifest: ManifestJson = {
    schema_version: "1",
    videos: [
      {
        video_id: clip.video_id,
        width: clip.width,
        height: clip.height,
        num_frames: clip.frames.length,
      },
    ],
    embedding_dim: encoder.dim,
    class_names: options.classNames,
  };
  return { manifest, detections };
}

function cropPixels(
  frame: number[][][],
  box: [number, number, number, number],
  padding: number,
  width: number,
  height: number,
): number[][][] {
  const x0 = Math.max(0, Math.floor(box[0]) - padding);
  const y0 = Math.max(0, Math.floor(box[1]) - padding);
  const x1 = Math.min(width, Math.ceil(box[2]) + padding);
  const y1 = Math.min(height, Math.ceil(box[3]) + padding);
  const crop: number[][][] = [];
  for (let y = y0; y < y1; y++) {
    crop.push(frame[y].slice(x0, x1));
  }
  return crop;
}

export function exportClassTable(classNames: string[], encoder: FeatureEncoder): ClassTableJson {
  if (classNames.length === 0) throw new Error("class list is empty");
  if (new Set(classNames).size !== classNames.length) {
    throw new Error("class names must be unique");
  }
  const embeddings = classNames.map((name) => {
    const pooled = new Array<number>(encoder.dim).fill(0);
    for (const template of PROMPT_TEMPLATES) {
      const e = encoder.encodeText(template(name));
      for (let i = 0; i < encoder.dim; i++) pooled[i] += e[i];
    }
    for (let i = 0; i < encoder.dim; i++) pooled[i] /= PROMPT_TEMPLATES.length;
    const norm = Math.sqrt(pooled.reduce((s, x) => s + x * x, 0));
    if (norm === 0) throw new Error(`prompt ensemble for ${name} collapsed to zero`);
    return pooled.map((x) => x / norm);
  });
  return { names: classNames, embeddings };
}

export function writeDataset(
  outDir: string,
  manifest: ManifestJson,
  detections: DetectionJson[],
): void {
  fs.mkdirSync(outDir, { recursive: true });
  fs.writeFileSync(path.join(outDir, "manifest.json"), JSON.stringify(manifest, null, 2) + "\n");
  const lines = detections.map((d) => JSON.stringify(d)).join("\n");
  fs.writeFileSync(path.join(outDir, "detections.jsonl"), lines ? lines + "\n" : "");
}
