import type { ViolationRecord } from "./types.js";

/** The server rejected the model (HTTP 422); carries its violation list. */
export class ValidationFailed extends Error {
  readonly violations: ViolationRecord[];

  constructor(message: string, violations: ViolationRecord[]) {
    super(message);
    this.name = "ValidationFailed";
    this.violations = violations;
  }
}

/** The server could not be reached after all retries. */
export class Unreachable extends Error {
  readonly attempts: number;

  constructor(message: string, attempts: number) {
    super(message);
    this.name = "Unreachable";
    this.attempts = attempts;
  }
}

/** Any other protocol-level failure (400, 404, persistent 5xx, bad body). */
export class ProtocolError extends Error {
  readonly status: number | null;

  constructor(message: string, status: number | null = null) {
    super(message);
    this.name = "ProtocolError";
    this.status = status;
  }
}

/** Map a non-200 response to the typed error for that status class. */
export function errorFromResponse(status: number, body: unknown): ValidationFailed | ProtocolError {
  const detail = (body as { detail?: { message?: string; violations?: ViolationRecord[] } })?.detail;
  const message = detail?.message ?? `service returned HTTP ${status}`;
  if (status === 422 && detail?.violations) {
    return new ValidationFailed(message, detail.violations);
  }
  return new ProtocolError(message, status);
}
