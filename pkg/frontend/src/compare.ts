import type { HistoryEntry } from "./state.js";

export interface MetricDelta {
  name: string;
  a: number | null;
  b: number | null;
  delta: number | null;
}

export interface ComparisonResult {
  deltas: MetricDelta[];
  coverageDelta: number;
}

const METRIC_NAMES = ["precision", "recall", "f1", "iou"] as const;

/**
 * Side-by-side comparison of two history entries from the same map.
 * Cross-map comparisons are rejected: the voxel universes differ, so the
 * numbers are not commensurable.
 */
export function compareEntries(a: HistoryEntry, b: HistoryEntry): ComparisonResult {
  if (a.mapId !== b.mapId) {
    throw new Error(
      `cannot compare across maps (${a.mapId} vs ${b.mapId})`,
    );
  }
  const deltas: MetricDelta[] = METRIC_NAMES.map((name) => {
    const va = a.response.metrics ? a.response.metrics[name] : null;
    const vb = b.response.metrics ? b.response.metrics[name] : null;
    return {
      name,
      a: va,
      b: vb,
      delta: va !== null && vb !== null ? vb - va : null,
    };
  });
  return {
    deltas,
    coverageDelta:
      b.response.mask.positive_count - a.response.mask.positive_count,
  };
}
