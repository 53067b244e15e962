"""Wire schemas for the latency service.

All latency fields are microseconds rounded to exactly 3 fractional digits
(round-half-even) at serialization, so clients in any language can compare
responses for exact equality after parsing.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel


class EstimateRequest(BaseModel):
    model: dict
    estimator: Literal["apm", "sim"] = "apm"
    config: Optional[str] = None


class LayerEstimate(BaseModel):
    name: str
    latency_us: float
    bound: str
    compute_us: float
    dram_us: float
    bus_us: float


class EstimateResponse(BaseModel):
    total_latency_us: float
    per_layer: list[LayerEstimate]
    macs: int
    params: int
    estimator: str
    config: str


class ViolationRecord(BaseModel):
    code: str
    message: str
    layer: Optional[int] = None


class ErrorDetail(BaseModel):
    status: int
    message: str
    violations: list[ViolationRecord] = []


class ErrorRecord(BaseModel):
    error: ErrorDetail


class BatchRequest(BaseModel):
    requests: list[EstimateRequest]


class BatchResponse(BaseModel):
    responses: list[Union[EstimateResponse, ErrorRecord]]


class ConfigRecord(BaseModel):
    name: str
    array_rows: int
    array_cols: int
    clock_hz: float
    dram_bw: float
    onchip_bus_bw: float
    buffer_bytes: int
    bytes_per_element: float
