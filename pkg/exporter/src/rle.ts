/**
 * Column-major run-length encoding, bit-exact with the pipeline's codec:
 * pixel order runs down columns left to right, runs alternate
 * background/foreground starting with background, and the leading
 * background count may be 0.
 */

export interface RleMask {
  height: number;
  width: number;
  counts: number[];
}

/** Encode a row-major boolean grid (mask[y][x]) into canonical RLE. */
export function rleEncode(mask: boolean[][], height: number, width: number): RleMask {
  if (mask.length !== height || mask.some((row) => row.length !== width)) {
    throw new Error(`mask shape does not match ${height}x${width}`);
  }
  const counts: number[] = [];
  let current = false; // runs start with background
  let run = 0;
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < height; y++) {
      const v = mask[y][x];
      if (v === current) {
        run++;
      } else {
        counts.push(run);
        current = v;
        run = 1;
      }
    }
  }
  counts.push(run);
  if (height * width === 0) return { height, width, counts: [] };
  return { height, width, counts };
}

/** Decode to a row-major boolean grid; throws on malformed counts. */
export function rleDecode(mask: RleMask): boolean[][] {
  const { height, width, counts } = mask;
  let total = 0;
  for (const c of counts) {
    if (c < 0 || !Number.isInteger(c)) throw new Error("mask run lengths must be non-negative integers");
    total += c;
  }
  if (total !== height * width) {
    throw new Error(`mask run-length total ${total} does not equal height*width ${height * width}`);
  }
  const grid: boolean[][] = Array.from({ length: height }, () => new Array<boolean>(width).fill(false));
  let pos = 0;
  for (let i = 0; i < counts.length; i++) {
    const fg = i % 2 === 1;
    for (let k = 0; k < counts[i]; k++, pos++) {
      if (fg) {
        const x = Math.floor(pos / height);
        const y = pos % height;
        grid[y][x] = true;
      }
    }
  }
  return grid;
}

export function maskArea(mask: RleMask): number {
  let area = 0;
  for (let i = 1; i < mask.counts.length; i += 2) area += mask.counts[i];
  return area;
}
