import { errorFromResponse, ProtocolError, Unreachable } from "./errors.js";
import type {
  BatchElement,
  ConfigRecord,
  Estimator,
  EstimateResponse,
  ModelRecord,
} from "./types.js";

export interface ClientConfig {
  baseUrl: string;
  /** Per-request timeout in seconds. */
  timeoutSeconds?: number;
  /** Extra attempts after the first, on connection errors and 5xx only. */
  maxRetries?: number;
  /** First backoff delay in seconds; doubles per retry (0.1, 0.2, 0.4...). */
  backoffSeconds?: number;
  /** Server-side batch cap; longer lists are split transparently. */
  batchSize?: number;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class LatencyClient {
  private readonly baseUrl: string;
  private readonly timeoutMs: number;
  private readonly maxRetries: number;
  private readonly backoffMs: number;
  private readonly batchSize: number;

  constructor(config: ClientConfig) {
    if ((config.timeoutSeconds ?? 10) <= 0) throw new RangeError("timeoutSeconds must be > 0");
    if ((config.maxRetries ?? 3) < 0) throw new RangeError("maxRetries must be >= 0");
    this.baseUrl = config.baseUrl.replace(/\/$/, "");
    this.timeoutMs = (config.timeoutSeconds ?? 10) * 1000;
    this.maxRetries = config.maxRetries ?? 3;
    this.backoffMs = (config.backoffSeconds ?? 0.1) * 1000;
    this.batchSize = config.batchSize ?? 256;
  }

  /**
   * POST with retry: connection failures and 5xx are retried with
   * exponential backoff; 4xx never is. Exhausted connection failures become
   * Unreachable, everything else maps to the typed protocol errors.
   */
  private async request(path: string, payload: unknown): Promise<unknown> {
    let lastConnectionError: unknown = null;
    const attempts = this.maxRetries + 1;
    for (let attempt = 0; attempt < attempts; attempt++) {
      if (attempt > 0) {
        await sleep(this.backoffMs * 2 ** (attempt - 1));
      }
      let response: Response;
      try {
        response = await fetch(this.baseUrl + path, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(payload),
          signal: AbortSignal.timeout(this.timeoutMs),
        });
      } catch (err) {
        lastConnectionError = err;
        continue;
      }
      if (response.status >= 500) {
        lastConnectionError = null;
        if (attempt === attempts - 1) {
          throw new ProtocolError(`service returned HTTP ${response.status}`, response.status);
        }
        continue;
      }
      let body: unknown;
      try {
        body = await response.json();
      } catch {
        throw new ProtocolError("service returned a non-JSON body", response.status);
      }
      if (!response.ok) {
        throw errorFromResponse(response.status, body);
      }
      return body;
    }
    throw new Unreachable(
      `could not reach ${this.baseUrl} after ${attempts} attempts: ${lastConnectionError}`,
      attempts,
    );
  }

  async estimate(model: ModelRecord, estimator: Estimator = "apm", config?: string): Promise<EstimateResponse> {
    const payload: Record<string, unknown> = { model, estimator };
    if (config !== undefined) payload.config = config;
    return (await this.request("/v1/estimate", payload)) as EstimateResponse;
  }

  /**
   * Batch estimation preserving input order; lists longer than the batch cap
   * are split into several wire calls and rejoined. Per-element failures
   * come back as in-place error records rather than exceptions.
   */
  async estimateBatch(
    models: ModelRecord[],
    estimator: Estimator = "apm",
    config?: string,
  ): Promise<BatchElement[]> {
    const out: BatchElement[] = [];
    for (let start = 0; start < models.length; start += this.batchSize) {
      const chunk = models.slice(start, start + this.batchSize);
      const requests = chunk.map((model) => {
        const entry: Record<string, unknown> = { model, estimator };
        if (config !== undefined) entry.config = config;
        return entry;
      });
      const body = (await this.request("/v1/estimate_batch", { requests })) as {
        responses: BatchElement[];
      };
      if (!Array.isArray(body.responses) || body.responses.length !== chunk.length) {
        throw new ProtocolError(
          `batch reply has ${body.responses?.length ?? "no"} elements for ${chunk.length} requests`,
        );
      }
      out.push(...body.responses);
    }
    return out;
  }

  async configs(): Promise<ConfigRecord[]> {
    const response = await fetch(this.baseUrl + "/v1/configs", {
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!response.ok) throw errorFromResponse(response.status, await response.json());
    return (await response.json()) as ConfigRecord[];
  }

  async health(): Promise<string> {
    const response = await fetch(this.baseUrl + "/v1/health", {
      signal: AbortSignal.timeout(this.timeoutMs),
    });
    if (!response.ok) throw new ProtocolError("health check failed", response.status);
    return (await response.json()) as string;
  }
}
