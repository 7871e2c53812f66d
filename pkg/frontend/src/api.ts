import type {
  ApiError,
  MapsResponse,
  ProjectionImage,
  QueryRequest,
  QueryResponse,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiRequestError> {
  let message = `HTTP ${response.status}`;
  try {
    const body = (await response.json()) as ApiError;
    if (body.error) message = body.error;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiRequestError(response.status, message);
}

/**
 * Client for the explorer server. At most one query request is in flight
 * per client: issuing a new query aborts the previous one (latest wins).
 */
export class ApiClient {
  private inflight: AbortController | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  async listMaps(): Promise<MapsResponse> {
    const response = await this.fetchFn(`${this.baseUrl}/api/maps`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as MapsResponse;
  }

  async query(mapId: string, request: QueryRequest): Promise<QueryResponse> {
    if (this.inflight !== null) {
      this.inflight.abort();
    }
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const response = await this.fetchFn(
        `${this.baseUrl}/api/maps/${encodeURIComponent(mapId)}/query`,
        {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(request),
          signal: controller.signal,
        },
      );
      if (!response.ok) throw await parseError(response);
      return (await response.json()) as QueryResponse;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }

  async groundTruth(
    mapId: string,
    label: number,
    axis = "z",
  ): Promise<ProjectionImage> {
    const response = await this.fetchFn(
      `${this.baseUrl}/api/maps/${encodeURIComponent(mapId)}/groundtruth` +
        `?label=${label}&axis=${axis}`,
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as ProjectionImage;
  }

  /**
   * Probe and use the optional free-text encoder. Resolves to null when
   * the server has no encoder configured (501); the free-text box stays
   * disabled in that case.
   */
  async encode(text: string): Promise<number[] | null> {
    const response = await this.fetchFn(`${this.baseUrl}/api/encode`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    if (response.status === 501) return null;
    if (!response.ok) throw await parseError(response);
    const body = (await response.json()) as { embedding: number[] };
    return body.embedding;
  }
}

export function encoderAvailable(status: number): boolean {
  return status !== 501;
}
