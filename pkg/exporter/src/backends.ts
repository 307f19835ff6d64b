/**
 * Model backends behind narrow interfaces.
 *
 * No pretrained checkpoints ship with this repository, so the default
 * backends are deterministic stand-ins with the right contracts: the mask
 * generator proposes class-agnostic regions via connected components over
 * background-subtracted pixels, and the encoder maps crops / prompt strings
 * through fixed seeded projections to unit vectors. Real models plug in by
 * implementing the same interfaces.
 */

import { makePrng, seededMatrix } from "./prng";
import { rleEncode } from "./rle";
import { RawClip, RegionProposal } from "./types";

export interface MaskGenerator {
  readonly name: string;
  propose(clip: RawClip, frameIdx: number): RegionProposal[];
}

export interface FeatureEncoder {
  readonly name: string;
  readonly dim: number;
  /** Embed a pixel crop (row-major RGB). Must return a unit vector. */
  encodeImage(pixels: number[][][], frameWidth: number, frameHeight: number): number[];
  /** Embed a text prompt. Must return a unit vector. */
  encodeText(prompt: string): number[];
}

// ---------------------------------------------------------------------------
// built-in class-agnostic mask generator

const COLOR_THRESHOLD = 40; // L1 RGB distance from the background estimate

export class ComponentMaskGenerator implements MaskGenerator {
  readonly name = "builtin:components";

  propose(clip: RawClip, frameIdx: number): RegionProposal[] {
    const frame = clip.frames[frameIdx];
    if (frame === null) return [];
    const { width, height } = clip;
    const bg = estimateBackground(frame, width, height);
    const fg: boolean[][] = [];
    for (let y = 0; y < height; y++) {
      const row = new Array<boolean>(width);
      for (let x = 0; x < width; x++) {
        row[x] = colorDistance(frame[y][x], bg) > COLOR_THRESHOLD;
      }
      fg.push(row);
    }
    const labels = connectedComponents(fg, width, height);
    const proposals: RegionProposal[] = [];
    for (const component of labels) {
      let x0 = width, y0 = height, x1 = -1, y1 = -1;
      const mask: boolean[][] = Array.from({ length: height }, () => new Array<boolean>(width).fill(false));
      for (const [y, x] of component) {
        mask[y][x] = true;
        if (x < x0) x0 = x;
        if (y < y0) y0 = y;
        if (x > x1) x1 = x;
        if (y > y1) y1 = y;
      }
      const boxArea = (x1 - x0 + 1) * (y1 - y0 + 1);
      proposals.push({
        mask,
        rle: rleEncode(mask, height, width),
        box: [x0, y0, x1 + 1, y1 + 1],
        objectness: component.length / boxArea, // fill ratio of the box, in (0, 1]
      });
    }
    // deterministic order: by box top-left, then size
    proposals.sort((a, b) => a.box[0] - b.box[0] || a.box[1] - b.box[1] || a.box[2] - b.box[2] || a.box[3] - b.box[3]);
    return proposals;
  }
}

function estimateBackground(frame: number[][][], width: number, height: number): number[] {
  // median of the border pixels per channel: robust to objects anywhere inside
  const border: number[][] = [];
  for (let x = 0; x < width; x++) {
    border.push(frame[0][x], frame[height - 1][x]);
  }
  for (let y = 1; y < height - 1; y++) {
    border.push(frame[y][0], frame[y][width - 1]);
  }
  return [0, 1, 2].map((c) => median(border.map((p) => p[c])));
}

function median(values: number[]): number {
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

function colorDistance(a: number[], b: number[]): number {
  return Math.abs(a[0] - b[0]) + Math.abs(a[1] - b[1]) + Math.abs(a[2] - b[2]);
}

function connectedComponents(fg: boolean[][], width: number, height: number): [number, number][][] {
  const seen: boolean[][] = Array.from({ length: height }, () => new Array<boolean>(width).fill(false));
  const components: [number, number][][] = [];
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (!fg[y][x] || seen[y][x]) continue;
      const queue: [number, number][] = [[y, x]];
      const component: [number, number][] = [];
      seen[y][x] = true;
      while (queue.length) {
        const [cy, cx] = queue.pop()!;
        component.push([cy, cx]);
        for (const [dy, dx] of [[1, 0], [-1, 0], [0, 1], [0, -1]] as const) {
          const ny = cy + dy, nx = cx + dx;
          if (ny >= 0 && ny < height && nx >= 0 && nx < width && fg[ny][nx] && !seen[ny][nx]) {
            seen[ny][nx] = true;
            queue.push([ny, nx]);
          }
        }
      }
      components.push(component);
    }
  }
  return components;
}

// ---------------------------------------------------------------------------
// built-in deterministic encoder

const IMAGE_FEATURES = 10;
const TEXT_BINS = 256;
const IMAGE_SEED = 0x5eed01;
const TEXT_SEED = 0x5eed02;

export class ProjectionEncoder implements FeatureEncoder {
  readonly name = "builtin:projection";
  readonly dim: number;
  private imageProj: number[][];
  private textProj: number[][];

  constructor(dim = 16) {
    this.dim = dim;
    this.imageProj = seededMatrix(dim, IMAGE_FEATURES, IMAGE_SEED);
    this.textProj = seededMatrix(dim, TEXT_BINS, TEXT_SEED);
  }

  encodeImage(pixels: number[][][], frameWidth: number, frameHeight: number): number[] {
    const h = pixels.length;
    const w = h ? pixels[0].length : 0;
    const n = Math.max(h * w, 1);
    const mean = [0, 0, 0];
    for (const row of pixels) for (const p of row) for (let c = 0; c < 3; c++) mean[c] += p[c];
    for (let c = 0; c < 3; c++) mean[c] /= n * 255;
    const varc = [0, 0, 0];
    for (const row of pixels) for (const p of row) for (let c = 0; c < 3; c++) {
      const d = p[c] / 255 - mean[c];
      varc[c] += d * d;
    }
    const features = [
      mean[0], mean[1], mean[2],
      Math.sqrt(varc[0] / n), Math.sqrt(varc[1] / n), Math.sqrt(varc[2] / n),
      w / Math.max(frameWidth, 1),
      h / Math.max(frameHeight, 1),
      Math.min(w, h) / Math.max(w, h, 1),
      1.0,
    ];
    return unit(matVec(this.imageProj, features));
  }

  encodeText(prompt: string): number[] {
    const bins = new Array<number>(TEXT_BINS).fill(0);
    const text = `${prompt.toLowerCase()}`;
    for (let i = 0; i + 2 < text.length; i++) {
      let hash = 2166136261;
      for (let k = i; k < i + 3; k++) {
        hash = Math.imul(hash ^ text.charCodeAt(k), 16777619) >>> 0;
      }
      bins[hash % TEXT_BINS] += 1;
    }
    return unit(matVec(this.textProj, bins));
  }
}

/** Constant-response encoder: exposes the normalization contract (any crop
 * maps to the same unit vector). */
export class ConstantEncoder implements FeatureEncoder {
  readonly name = "builtin:constant";
  constructor(readonly dim = 16) {}
  encodeImage(): number[] {
    return unit(new Array(this.dim).fill(1));
  }
  encodeText(): number[] {
    return unit(new Array(this.dim).fill(1));
  }
}

function matVec(m: number[][], v: number[]): number[] {
  return m.map((row) => {
    let s = 0;
    for (let j = 0; j < row.length; j++) s += row[j] * v[j];
    return s;
  });
}

function unit(v: number[]): number[] {
  const norm = Math.sqrt(v.reduce((s, x) => s + x * x, 0));
  if (norm === 0) throw new Error("cannot normalize a zero feature vector");
  return v.map((x) => x / norm);
}

export function makeMaskGenerator(name: string): MaskGenerator {
  if (name === "builtin:components") return new ComponentMaskGenerator();
  throw new Error(`mask model ${name} is not available (no checkpoints bundled); use builtin:components`);
}

export function makeEncoder(name: string, dim: number): FeatureEncoder {
  if (name === "builtin:projection") return new ProjectionEncoder(dim);
  if (name === "builtin:constant") return new ConstantEncoder(dim);
  throw new Error(`encoder ${name} is not available (no checkpoints bundled); use builtin:projection`);
}
