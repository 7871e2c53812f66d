import type { PostProcessParams } from "./types.js";

// The parameter panel never dispatches out-of-range values: whatever the
// inputs hold, requests carry threshold in [0, 1], sigma >= 0 and
// non-negative integer iteration counts.

export const DEFAULT_PARAMS: PostProcessParams = {
  closing_iters: 1,
  blur_sigma: 1.0,
  threshold: 0.5,
  dilation_iters: 1,
};

function finiteOr(value: number, fallback: number): number {
  return Number.isFinite(value) ? value : fallback;
}

export function clampThreshold(value: number): number {
  return Math.min(1, Math.max(0, finiteOr(value, DEFAULT_PARAMS.threshold)));
}

export function clampSigma(value: number): number {
  return Math.max(0, finiteOr(value, DEFAULT_PARAMS.blur_sigma));
}

export function clampIterations(value: number): number {
  return Math.max(0, Math.round(finiteOr(value, 0)));
}

export function sanitizeParams(raw: Partial<PostProcessParams>): PostProcessParams {
  return {
    closing_iters: clampIterations(raw.closing_iters ?? DEFAULT_PARAMS.closing_iters),
    blur_sigma: clampSigma(raw.blur_sigma ?? DEFAULT_PARAMS.blur_sigma),
    threshold: clampThreshold(raw.threshold ?? DEFAULT_PARAMS.threshold),
    dilation_iters: clampIterations(
      raw.dilation_iters ?? DEFAULT_PARAMS.dilation_iters,
    ),
  };
}

export function paramsInRange(params: PostProcessParams): boolean {
  return (
    params.threshold >= 0 &&
    params.threshold <= 1 &&
    params.blur_sigma >= 0 &&
    Number.isInteger(params.closing_iters) &&
    params.closing_iters >= 0 &&
    Number.isInteger(params.dilation_iters) &&
    params.dilation_iters >= 0
  );
}
