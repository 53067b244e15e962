"""Minimal in-process client for the latency service.

Just enough to back the CLI's --estimator service path; external pipelines
should use the standalone client package, which adds retry, backoff, and
transparent batch splitting.
"""

from __future__ import annotations

import httpx

from .ir import ModelGraph, model_to_dict


class ServiceError(RuntimeError):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail
        super().__init__(f"service returned {status}: {detail}")


def _as_dict(model) -> dict:
    return model_to_dict(model) if isinstance(model, ModelGraph) else model


class ServiceClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self._http = httpx.Client(base_url=base_url, timeout=timeout)

    def close(self) -> None:
        self._http.close()

    def _post(self, path: str, payload: dict):
        resp = self._http.post(path, json=payload)
        if resp.status_code != 200:
            try:
                detail = resp.json()
            except ValueError:
                detail = resp.text
            raise ServiceError(resp.status_code, detail)
        return resp.json()

    def estimate(self, model, estimator: str = "apm", config: str | None = None) -> dict:
        payload = {"model": _as_dict(model), "estimator": estimator}
        if config is not None:
            payload["config"] = config
        return self._post("/v1/estimate", payload)

    def estimate_batch(self, models, estimator: str = "apm", config: str | None = None) -> list[dict]:
        requests = []
        for model in models:
            entry = {"model": _as_dict(model), "estimator": estimator}
            if config is not None:
                entry["config"] = config
            requests.append(entry)
        return self._post("/v1/estimate_batch", {"requests": requests})["responses"]

    def configs(self) -> list[dict]:
        resp = self._http.get("/v1/configs")
        if resp.status_code != 200:
            raise ServiceError(resp.status_code, resp.text)
        return resp.json()

    def health(self) -> str:
        resp = self._http.get("/v1/health")
        if resp.status_code != 200:
            raise ServiceError(resp.status_code, resp.text)
        return resp.json()
