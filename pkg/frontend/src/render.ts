import type { ProjectionImage } from "./types.js";
import type { OverlayToggles } from "./state.js";

// Color scheme follows the match/non-match convention: query matches in
// orange, everything else toward blue. The heatmap scale is fixed to the
// cosine range [-1, 1] for the whole session so brightness is comparable
// across successive queries.

export const SCALE_MIN = -1;
export const SCALE_MAX = 1;

const MATCH_COLOR: [number, number, number] = [255, 140, 0];
const GROUND_TRUTH_COLOR: [number, number, number] = [0, 200, 90];
const COLD: [number, number, number] = [28, 60, 160];
const HOT: [number, number, number] = [255, 210, 120];

export function heatColor(score: number): [number, number, number] {
  const t = Math.min(1, Math.max(0, (score - SCALE_MIN) / (SCALE_MAX - SCALE_MIN)));
  return [
    Math.round(COLD[0] + t * (HOT[0] - COLD[0])),
    Math.round(COLD[1] + t * (HOT[1] - COLD[1])),
    Math.round(COLD[2] + t * (HOT[2] - COLD[2])),
  ];
}

export interface CompositeImage {
  width: number;
  height: number;
  pixels: Uint8ClampedArray<ArrayBuffer>; // RGBA, row-major
  zeroCoverage: boolean;
  degraded: boolean;
}

function blend(
  pixels: Uint8ClampedArray,
  offset: number,
  color: [number, number, number],
  alpha: number,
): void {
  pixels[offset] = Math.round(pixels[offset] * (1 - alpha) + color[0] * alpha);
  pixels[offset + 1] = Math.round(
    pixels[offset + 1] * (1 - alpha) + color[1] * alpha,
  );
  pixels[offset + 2] = Math.round(
    pixels[offset + 2] * (1 - alpha) + color[2] * alpha,
  );
  pixels[offset + 3] = 255;
}

/**
 * Compose the score heatmap with mask and ground-truth overlays into one
 * RGBA buffer. A missing projection yields a degraded 0x0 image; the app
 * shows an error banner for it instead of a canvas.
 */
export function renderComposite(
  scores: ProjectionImage | null,
  mask: ProjectionImage | null,
  groundTruth: ProjectionImage | null,
  overlays: OverlayToggles,
): CompositeImage {
  if (scores === null || scores.width * scores.height !== scores.values.length) {
    return {
      width: 0,
      height: 0,
      pixels: new Uint8ClampedArray(0),
      zeroCoverage: true,
      degraded: true,
    };
  }
  const { width, height } = scores;
  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const offset = 4 * i;
    if (overlays.heatmap) {
      const [r, g, b] = heatColor(scores.values[i]);
      pixels[offset] = r;
      pixels[offset + 1] = g;
      pixels[offset + 2] = b;
    }
    pixels[offset + 3] = 255;
  }

  let coverage = 0;
  if (overlays.mask && mask !== null) {
    for (let i = 0; i < Math.min(mask.values.length, width * height); i++) {
      if (mask.values[i] > 0) {
        coverage++;
        blend(pixels, 4 * i, MATCH_COLOR, 0.85);
      }
    }
  }
  if (overlays.groundTruth && groundTruth !== null) {
    for (
      let i = 0;
      i < Math.min(groundTruth.values.length, width * height);
      i++
    ) {
      if (groundTruth.values[i] > 0) {
        blend(pixels, 4 * i, GROUND_TRUTH_COLOR, 0.45);
      }
    }
  }
  return { width, height, pixels, zeroCoverage: coverage === 0, degraded: false };
}

export interface LegendEntry {
  color: string;
  label: string;
}

export function legend(overlays: OverlayToggles): LegendEntry[] {
  const entries: LegendEntry[] = [];
  if (overlays.heatmap) {
    entries.push({ color: `rgb(${COLD.join(",")})`, label: "low similarity" });
    entries.push({ color: `rgb(${HOT.join(",")})`, label: "high similarity" });
  }
  if (overlays.mask) {
    entries.push({ color: `rgb(${MATCH_COLOR.join(",")})`, label: "query match" });
  }
  if (overlays.groundTruth) {
    entries.push({
      color: `rgb(${GROUND_TRUTH_COLOR.join(",")})`,
      label: "ground truth",
    });
  }
  return entries;
}

/** Pixel indices covered by an overlay; used to check overlay agreement. */
export function coveredPixels(projection: ProjectionImage): Set<number> {
  const covered = new Set<number>();
  projection.values.forEach((value, i) => {
    if (value > 0) covered.add(i);
  });
  return covered;
}
