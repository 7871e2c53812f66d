import type { BinaryMetrics } from "./types.js";

// Displayed metrics are the server-reported values verbatim: no client
// side recomputation or rounding.

export function formatMetric(value: number): string {
  return String(value);
}

export interface MetricBadge {
  name: string;
  text: string;
  degenerate: boolean;
}

export function metricBadges(metrics: BinaryMetrics): MetricBadge[] {
  const names = ["precision", "recall", "f1", "iou"] as const;
  return names.map((name) => ({
    name,
    text: formatMetric(metrics[name]),
    degenerate: metrics.degenerate.includes(name),
  }));
}
