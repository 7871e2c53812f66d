import type { RleMask } from "./types.js";

/** Expand a run-length encoded mask back to per-voxel booleans. */
export function decodeRle(mask: RleMask): boolean[] {
  const out: boolean[] = new Array(mask.total);
  let value = mask.first;
  let cursor = 0;
  for (const run of mask.runs) {
    for (let i = 0; i < run; i++) {
      out[cursor++] = value;
    }
    value = !value;
  }
  if (cursor !== mask.total) {
    throw new Error(`RLE runs cover ${cursor} voxels, expected ${mask.total}`);
  }
  return out;
}

export function positiveCount(mask: RleMask): number {
  let count = 0;
  let value = mask.first;
  for (const run of mask.runs) {
    if (value) count += run;
    value = !value;
  }
  return count;
}
