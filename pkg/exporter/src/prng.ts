/** Small deterministic PRNG (SplitMix64-style over 32-bit lanes) so the
 * built-in encoder's projection matrices are identical on every run and
 * platform. */
export function makePrng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0;
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0;
    z = (z ^ (z >>> 15)) >>> 0;
    return z / 4294967296;
  };
}

/** Uniform(-1, 1) matrix with a fixed seed. */
export function seededMatrix(rows: number, cols: number, seed: number): number[][] {
  const rand = makePrng(seed);
  const out: number[][] = [];
  for (let i = 0; i < rows; i++) {
    const row = new Array<number>(cols);
    for (let j = 0; j < cols; j++) row[j] = rand() * 2 - 1;
    out.push(row);
  }
  return out;
}
