export { LatencyClient } from "./client.js";
export type { ClientConfig } from "./client.js";
export { ProtocolError, Unreachable, ValidationFailed, errorFromResponse } from "./errors.js";
export * from "./types.js";
