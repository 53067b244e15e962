"""Glue between genomes and the cost models: one evaluator per estimator kind."""

from __future__ import annotations

from .accel import AcceleratorConfig, estimate_model
from .ir import model_to_dict
from .search import Evaluation, Evaluator
from .simulator import simulate_model
from .space import DEFAULT_SKELETON, StageSkeleton, decode
from .surrogate import AccuracyTable, MissEntry, SurrogateParams, predict, predict_from_table


def make_evaluator(
    accel_cfg: AcceleratorConfig | None = None,
    estimator: str = "apm",
    skeleton: StageSkeleton = DEFAULT_SKELETON,
    surrogate_params: SurrogateParams = SurrogateParams(),
    table: AccuracyTable | None = None,
    service_url: str | None = None,
    service_config: str | None = None,
) -> Evaluator:
    """Build an Evaluator closing over decode + latency estimator + surrogate.

    estimator "apm" and "sim" run in-process against accel_cfg; "service"
    sends the decoded model to a latency server at service_url (which owns
    its own named configs). When an accuracy table is given, parametric
    prediction is the fallback for missing entries.
    """
    if estimator in ("apm", "sim") and accel_cfg is None:
        raise ValueError(f"estimator {estimator!r} needs an accelerator config")
    if estimator == "service":
        if service_url is None:
            raise ValueError("estimator 'service' needs a service_url")
        from .client import ServiceClient

        client = ServiceClient(service_url)

    def accuracy_of(graph) -> float:
        if table is not None:
            try:
                return predict_from_table(graph, table)
            except MissEntry:
                pass
        return predict(graph, surrogate_params)

    def evaluate(genome) -> Evaluation:
        graph = decode(genome, skeleton)
        if estimator == "apm":
            bd = estimate_model(graph, accel_cfg)
            latency, macs, params = bd.total_us, bd.macs, bd.params
        elif estimator == "sim":
            report = simulate_model(graph, accel_cfg)
            latency, macs, params = report.total_us, report.macs, report.params
        else:
            resp = client.estimate(model_to_dict(graph), estimator="apm", config=service_config)
            latency, macs, params = resp["total_latency_us"], resp["macs"], resp["params"]
        return Evaluation(accuracy=accuracy_of(graph), latency_us=latency, macs=macs, params=params)

    return evaluate
