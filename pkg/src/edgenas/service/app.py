"""Latency-estimation service.

Stateless HTTP+JSON wrapper over the in-process estimators. Named
accelerator configs are loaded once at startup from a directory of TOML
files (EDGENAS_CONFIG_DIR, falling back to the configs shipped with the
package); requests reference them by name. Responses are numerically
identical to in-process estimation up to the documented 3-digit wire
rounding.

Error mapping: 400 malformed JSON body, 404 unknown config name, 413 batch
over the size limit, 422 model validation failure (body carries the
violation list). Batch elements fail in place without failing the batch.

Batches fan out over a small process pool (the estimators are pure, so
results are bit-identical to sequential evaluation); response order always
matches request order.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from math import ceil
from pathlib import Path

import json
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from .. import __version__
from ..accel import AcceleratorConfig, breakdown_rows, estimate_model, load_config
from ..ir import ModelValidationError, model_from_dict
from ..simulator import InfeasibleTile, simulate_model
from .schemas import (
    BatchResponse,
    ConfigRecord,
    ErrorDetail,
    EstimateRequest,
    EstimateResponse,
    ViolationRecord,
)

DEFAULT_CONFIG_NAME = "edgetpu_like"
DEFAULT_MAX_BATCH = 256
_POOL_THRESHOLD = 8  # below this, fan-out overhead beats the win


def builtin_config_dir() -> Path:
    return Path(resources.files("edgenas") / "configs")


def load_config_registry(config_dir=None) -> dict[str, AcceleratorConfig]:
    directory = Path(config_dir) if config_dir else builtin_config_dir()
    registry = {}
    for path in sorted(directory.glob("*.toml")):
        registry[path.stem] = load_config(path)
    if not registry:
        raise FileNotFoundError(f"no *.toml accelerator configs in {directory}")
    return registry


def _round3(x: float) -> float:
    return round(x, 3)


def resolve_config(registry: dict[str, AcceleratorConfig], name) -> tuple[AcceleratorConfig, str]:
    cfg_name = name or DEFAULT_CONFIG_NAME
    try:
        return registry[cfg_name], cfg_name
    except KeyError:
        raise HTTPException(
            status_code=404,
            detail=jsonable_encoder(
                ErrorDetail(status=404, message=f"unknown config {cfg_name!r}; known: {sorted(registry)}")
            ),
        ) from None


def estimate_to_payload(model: dict, estimator: str, cfg: AcceleratorConfig, cfg_name: str) -> dict:
    """Wire-form EstimateResponse dict (plain dicts keep batch fan-out lean)."""
    try:
        graph = model_from_dict(model)
    except ModelValidationError as e:
        raise HTTPException(
            status_code=422,
            detail=jsonable_encoder(
                ErrorDetail(
                    status=422,
                    message="model validation failed",
                    violations=[
                        ViolationRecord(code=v.code, message=v.message, layer=v.layer)
                        for v in e.violations
                    ],
                )
            ),
        ) from e
    if estimator == "apm":
        bd = estimate_model(graph, cfg)
        per_layer = [
            {
                "name": row["name"],
                "latency_us": _round3(row["latency_us"]),
                "bound": row["bound"],
                "compute_us": _round3(row["compute_us"]),
                "dram_us": _round3(row["dram_us"]),
                "bus_us": _round3(row["bus_us"]),
            }
            for row in breakdown_rows(graph, bd)
        ]
        total, macs, params = bd.total_us, bd.macs, bd.params
    else:
        try:
            report = simulate_model(graph, cfg)
        except InfeasibleTile as e:
            raise HTTPException(
                status_code=422,
                detail=jsonable_encoder(
                    ErrorDetail(
                        status=422,
                        message=f"infeasible tiling under config {cfg_name!r}: {e}",
                        violations=[ViolationRecord(code="infeasible_tile", message=str(e))],
                    )
                ),
            ) from e
        us = 1e6 / cfg.clock_hz
        per_layer = []
        for name, ls in zip([f"{l.op}_{i}" for i, l in enumerate(graph.layers)], report.per_layer):
            per_layer.append(
                {
                    "name": name,
                    "latency_us": _round3(ls.cycles * us),
                    "bound": "compute" if ls.compute_cycles >= ls.dma_cycles else "dram",
                    "compute_us": _round3(ls.compute_cycles * us),
                    "dram_us": _round3(ls.dma_cycles * us),
                    "bus_us": 0.0,
                }
            )
        total, macs, params = report.total_us, report.macs, report.params
    return {
        "total_latency_us": _round3(total),
        "per_layer": per_layer,
        "macs": macs,
        "params": params,
        "estimator": estimator,
        "config": cfg_name,
    }


def _error_record(status: int, message: str) -> dict:
    return {"error": {"status": status, "message": message, "violations": []}}


def _element_response(registry: dict[str, AcceleratorConfig], element: tuple) -> dict:
    """One batch element -> response dict, or an in-place error record."""
    model, estimator, config = element
    if not isinstance(model, dict):
        return _error_record(422, "element must carry a model object")
    if estimator not in ("apm", "sim"):
        return _error_record(422, f"unknown estimator {estimator!r}")
    if config is not None and not isinstance(config, str):
        return _error_record(422, "config must be a string name")
    try:
        cfg, cfg_name = resolve_config(registry, config)
        return estimate_to_payload(model, estimator, cfg, cfg_name)
    except HTTPException as e:
        detail = e.detail if isinstance(e.detail, dict) else {"status": e.status_code, "message": str(e.detail)}
        return {"error": detail}


def _element_json(registry: dict[str, AcceleratorConfig], element: tuple) -> str:
    # workers hand back serialized elements so the fan-out parallelizes the
    # response encoding too; the parent just joins
    return json.dumps(_element_response(registry, element), separators=(",", ":"))


_WORKER_REGISTRY: dict[str, AcceleratorConfig] | None = None


def _pool_initializer(config_dir) -> None:
    global _WORKER_REGISTRY
    _WORKER_REGISTRY = load_config_registry(config_dir)


def _pool_worker(element: tuple) -> str:
    return _element_json(_WORKER_REGISTRY, element)


class _BatchPool:
    """Lazily created process pool; falls back to inline evaluation."""

    def __init__(self, config_dir, procs: int | None = None):
        self._config_dir = config_dir
        cpu = os.cpu_count() or 1
        self._procs = procs if procs is not None else min(4, cpu)
        self._lock = threading.Lock()
        self._pool: ProcessPoolExecutor | None = None
        self._broken = False

    def map(self, elements: list[tuple]) -> list[dict] | None:
        if self._procs < 2 or self._broken or len(elements) < _POOL_THRESHOLD:
            return None
        with self._lock:
            if self._pool is None:
                try:
                    self._pool = ProcessPoolExecutor(
                        max_workers=self._procs,
                        initializer=_pool_initializer,
                        initargs=(self._config_dir,),
                    )
                except OSError:
                    self._broken = True
                    return None
        try:
            chunk = ceil(len(elements) / (self._procs * 2))
            return list(self._pool.map(_pool_worker, elements, chunksize=chunk))
        except Exception:
            self._broken = True
            return None

    def shutdown(self) -> None:
        with self._lock:
            if self._pool is not None:
                self._pool.shutdown(wait=False, cancel_futures=True)
                self._pool = None


def create_app(config_dir=None, max_batch: int = DEFAULT_MAX_BATCH) -> FastAPI:
    config_dir = config_dir or os.environ.get("EDGENAS_CONFIG_DIR")
    registry = load_config_registry(config_dir)
    pool = _BatchPool(config_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        pool.shutdown()

    app = FastAPI(title="edgenas latency service", version=__version__, lifespan=lifespan)

    @app.exception_handler(RequestValidationError)
    async def bad_request_handler(request: Request, exc: RequestValidationError):
        # FastAPI folds JSON syntax errors into request validation; the wire
        # contract distinguishes malformed JSON (400) from invalid content (422).
        if any(err.get("type") == "json_invalid" for err in exc.errors()):
            return JSONResponse(status_code=400, content={"detail": {"message": "malformed JSON body"}})
        return JSONResponse(status_code=422, content={"detail": jsonable_encoder(exc.errors())})

    @app.post("/v1/estimate", response_model=EstimateResponse)
    def handle_estimate(req: EstimateRequest):
        cfg, cfg_name = resolve_config(registry, req.config)
        return estimate_to_payload(req.model, req.estimator, cfg, cfg_name)

    def _fan_out(elements: list[tuple]) -> str:
        parts = pool.map(elements)
        if parts is None:
            parts = [_element_json(registry, e) for e in elements]
        return '{"responses":[' + ",".join(parts) + "]}"

    @app.post("/v1/estimate_batch", response_model=BatchResponse)
    async def handle_estimate_batch(request: Request):
        # parsed by hand: one JSON walk for potentially hundreds of models
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse(status_code=400, content={"detail": {"message": "malformed JSON body"}})
        if not isinstance(body, dict) or not isinstance(body.get("requests"), list):
            raise HTTPException(
                status_code=422,
                detail=jsonable_encoder(ErrorDetail(status=422, message='body must be {"requests": [...]}')),
            )
        reqs = body["requests"]
        if len(reqs) > max_batch:
            raise HTTPException(
                status_code=413,
                detail=jsonable_encoder(
                    ErrorDetail(status=413, message=f"batch of {len(reqs)} exceeds limit {max_batch}")
                ),
            )
        elements = [
            (r.get("model"), r.get("estimator", "apm"), r.get("config")) if isinstance(r, dict) else (None, "apm", None)
            for r in reqs
        ]
        body_out = await run_in_threadpool(_fan_out, elements)
        return Response(content=body_out, media_type="application/json")

    @app.get("/v1/configs", response_model=list[ConfigRecord])
    def handle_configs() -> list[ConfigRecord]:
        return [
            ConfigRecord(
                name=name,
                array_rows=cfg.array_rows,
                array_cols=cfg.array_cols,
                clock_hz=cfg.clock_hz,
                dram_bw=cfg.dram_bw,
                onchip_bus_bw=cfg.onchip_bus_bw,
                buffer_bytes=cfg.buffer_bytes,
                bytes_per_element=cfg.bytes_per_element,
            )
            for name, cfg in sorted(registry.items())
        ]

    @app.get("/v1/health")
    def handle_health() -> str:
        return "ok"

    return app
