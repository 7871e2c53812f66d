// Wire types of the explorer server API.

export type QueryMode = "vlmaps" | "segmentation";
export type Axis = "x" | "y" | "z";

export interface MapInfo {
  map_id: string;
  cell_size: number;
  dim: number;
  voxel_count: number;
  labels: string[];
}

export interface MapsResponse {
  maps: MapInfo[];
  diagnostics: { path: string; error: string }[];
}

export interface PostProcessParams {
  closing_iters: number;
  blur_sigma: number;
  threshold: number;
  dilation_iters: number;
}

export interface QueryRequest {
  key?: string;
  embedding?: number[];
  mode: QueryMode;
  params: PostProcessParams;
  prompt_engineering?: boolean;
  negative_key?: string;
  truth_label?: number | null;
  axis?: Axis;
  aggregate?: "max" | "mean";
}

export interface RleMask {
  total: number;
  first: boolean;
  runs: number[];
  positive_count: number;
}

export interface ProjectionImage {
  axis: Axis;
  aggregate: string;
  width: number;
  height: number;
  offset: [number, number];
  values: number[];
}

export interface BinaryMetrics {
  tp: number;
  fp: number;
  fn: number;
  precision: number;
  recall: number;
  f1: number;
  iou: number;
  degenerate: string[];
}

export interface QueryResponse {
  map_id: string;
  mask: RleMask;
  score_stats: { min: number; max: number; mean: number };
  projection: ProjectionImage;
  mask_projection: ProjectionImage;
  metrics: BinaryMetrics | null;
}

export interface ApiError {
  error: string;
}
