/**
 * Wire schema of the latency service, mirrored field for field.
 * All latency values are microseconds with exactly 3 fractional digits.
 */

export type Estimator = "apm" | "sim";

export interface ModelInput {
  h: number;
  w: number;
  c: number;
}

export interface LayerRecord {
  op: string;
  [field: string]: unknown;
}

export interface ModelRecord {
  name: string;
  input: ModelInput;
  layers: LayerRecord[];
}

export interface LayerEstimate {
  name: string;
  latency_us: number;
  bound: string;
  compute_us: number;
  dram_us: number;
  bus_us: number;
}

export interface EstimateResponse {
  total_latency_us: number;
  per_layer: LayerEstimate[];
  macs: number;
  params: number;
  estimator: string;
  config: string;
}

export interface ViolationRecord {
  code: string;
  message: string;
  layer: number | null;
}

export interface ErrorDetail {
  status: number;
  message: string;
  violations: ViolationRecord[];
}

/** In-place failure record inside a batch response. */
export interface ErrorRecord {
  error: ErrorDetail;
}

export type BatchElement = EstimateResponse | ErrorRecord;

export function isErrorRecord(element: BatchElement): element is ErrorRecord {
  return "error" in element;
}

export interface ConfigRecord {
  name: string;
  array_rows: number;
  array_cols: number;
  clock_hz: number;
  dram_bw: number;
  onchip_bus_bw: number;
  buffer_bytes: number;
  bytes_per_element: number;
}
