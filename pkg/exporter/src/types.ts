import { RleMask } from "./rle";

/** A decoded clip: frames of row-major RGB pixels (0-255). A null frame
 * stands for one that failed to decode. */
export interface RawClip {
  video_id: string;
  width: number;
  height: number;
  frames: (number[][][] | null)[]; // [frame][y][x] -> [r, g, b]
}

export interface DetectionJson {
  video_id: string;
  frame_idx: number;
  box: [number, number, number, number];
  objectness: number;
  mask: { size: [number, number]; counts: number[] };
  embedding: number[];
}

export interface ManifestJson {
  schema_version: "1";
  videos: { video_id: string; width: number; height: number; num_frames: number }[];
  embedding_dim: number;
  class_names: string[];
}

export interface ClassTableJson {
  names: string[];
  embeddings: number[][];
}

/** One class-agnostic region proposal in one frame. */
export interface RegionProposal {
  mask: boolean[][];
  rle: RleMask;
  box: [number, number, number, number];
  objectness: number;
}
