import type { QueryRequest, QueryResponse } from "./types.js";

export interface OverlayToggles {
  heatmap: boolean;
  mask: boolean;
  groundTruth: boolean;
}

export interface HistoryEntry {
  index: number;
  mapId: string;
  request: QueryRequest;
  response: QueryResponse;
  issuedAt: number;
}

/**
 * Per-session explorer state. The query history is append-only: entries
 * are pushed when a result is replaced and can be re-displayed without a
 * network round trip.
 */
export class SessionState {
  selectedMap: string | null = null;
  activeQuery: { kind: "key" | "text"; value: string } | null = null;
  overlays: OverlayToggles = { heatmap: true, mask: true, groundTruth: false };
  current: HistoryEntry | null = null;

  private readonly entries: HistoryEntry[] = [];

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  selectMap(mapId: string): void {
    this.selectedMap = mapId;
    this.current = null;
  }

  recordResult(request: QueryRequest, response: QueryResponse): HistoryEntry {
    if (this.selectedMap === null) {
      throw new Error("no map selected");
    }
    const entry: HistoryEntry = {
      index: this.entries.length,
      mapId: this.selectedMap,
      request,
      response,
      issuedAt: Date.now(),
    };
    if (this.current !== null) {
      this.entries.push(this.current);
      this.reindex();
    }
    this.current = entry;
    return entry;
  }

  /** Re-display a stored entry; never triggers a request. */
  recall(index: number): HistoryEntry {
    const entry = this.entries[index];
    if (entry === undefined) {
      throw new Error(`no history entry ${index}`);
    }
    return entry;
  }

  private reindex(): void {
    this.entries.forEach((entry, i) => {
      entry.index = i;
    });
  }
}
