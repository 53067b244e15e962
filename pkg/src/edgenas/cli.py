"""edgenas command line.

Thin front end over the library: estimation, simulation, search, Pareto
extraction, study reproduction, and serving the HTTP estimator. Exit codes:
0 success, 1 bad input/flags (parse errors, missing files, bind failure),
2 model validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import socket
import statistics
import sys
from pathlib import Path

from .accel import AcceleratorConfig, breakdown_rows, estimate_model, load_config
from .ir import ModelValidationError, load_model
from .evaluate import make_evaluator
from .search import (
    EvaluatorError,
    RewardSpec,
    SearchConfig,
    pareto_front,
    read_history_csv,
    run_search,
    write_history_csv,
    write_pareto_csv,
)
from .service.app import builtin_config_dir
from .simulator import InfeasibleTile, simulate_model
from .space import DEFAULT_SKELETON, load_skeleton
from .studies import crossover_sweep, rmse_study, write_study_csv, write_sweep_csv
from .surrogate import SurrogateParams
from . import plots


def _default_config_path() -> Path:
    return builtin_config_dir() / "edgetpu_like.toml"


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None, help="accelerator config TOML")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", type=Path, default=Path("."), help="output directory for artifacts")


def _load_cfg(args) -> AcceleratorConfig:
    path = args.config if args.config else _default_config_path()
    try:
        return load_config(path)
    except (OSError, ValueError) as e:  # missing file, TOML syntax, ConfigError
        print(f"error: bad accelerator config {path}: {e}", file=sys.stderr)
        raise SystemExit(1)


def _load_graph_or_exit(path: Path):
    try:
        return load_model(path)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(1)
    except json.JSONDecodeError as e:
        print(f"error: malformed JSON in {path}: {e}", file=sys.stderr)
        raise SystemExit(1)
    except ModelValidationError as e:
        print(f"error: invalid model {path}:", file=sys.stderr)
        for v in e.violations:
            print(f"  [{v.code}] {v.message}", file=sys.stderr)
        raise SystemExit(2)


def _outdir(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_estimate(args) -> int:
    graph = _load_graph_or_exit(args.model)
    cfg = _load_cfg(args)
    try:
        if args.estimator == "apm":
            bd = estimate_model(graph, cfg)
            rows = breakdown_rows(graph, bd)
            total, macs, params = bd.total_us, bd.macs, bd.params
        else:
            report = simulate_model(graph, cfg)
            us = 1e6 / cfg.clock_hz
            rows = [
                {
                    "name": f"{layer.op}_{i}",
                    "latency_us": ls.cycles * us,
                    "bound": "compute" if ls.compute_cycles >= ls.dma_cycles else "dram",
                    "compute_us": ls.compute_cycles * us,
                    "dram_us": ls.dma_cycles * us,
                    "bus_us": 0.0,
                }
                for i, (layer, ls) in enumerate(zip(graph.layers, report.per_layer))
            ]
            total, macs, params = report.total_us, report.macs, report.params
    except ModelValidationError as e:
        for v in e.violations:
            print(f"error: [{v.code}] {v.message}", file=sys.stderr)
        return 2
    except InfeasibleTile as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    print(f"{'layer':<16}{'bound':<9}{'compute_us':>12}{'dram_us':>12}{'bus_us':>12}{'latency_us':>12}")
    for r in rows:
        print(
            f"{r['name']:<16}{r['bound']:<9}{r['compute_us']:>12.3f}{r['dram_us']:>12.3f}"
            f"{r['bus_us']:>12.3f}{r['latency_us']:>12.3f}"
        )
    print(f"estimator={args.estimator} macs={macs} params={params}")
    print(f"total_latency_us={total:.3f}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["name", "latency_us", "bound", "compute_us", "dram_us", "bus_us"])
            for r in rows:
                writer.writerow(
                    [r["name"], repr(r["latency_us"]), r["bound"], repr(r["compute_us"]),
                     repr(r["dram_us"]), repr(r["bus_us"])]
                )
    return 0


def cmd_search(args) -> int:
    cfg = _load_cfg(args)
    skeleton = load_skeleton(args.skeleton) if args.skeleton else DEFAULT_SKELETON
    try:
        search_cfg = SearchConfig(
            budget=args.budget,
            algorithm=args.algo,
            population=args.population,
            sample_size=args.sample_size,
            seed=args.seed,
            estimator=args.estimator,
        )
        reward_spec = RewardSpec(target_latency_us=args.target_latency_us, mode=args.reward_mode)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        evaluator = make_evaluator(
            accel_cfg=cfg,
            estimator=args.estimator,
            skeleton=skeleton,
            surrogate_params=SurrogateParams(noise_sd=args.noise_sd, seed=args.seed),
            service_url=args.server_url,
        )
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        history = run_search(search_cfg, reward_spec, evaluator, skeleton)
    except EvaluatorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out = _outdir(args)
    write_history_csv(history, out / "history.csv")
    front = pareto_front(history)
    write_pareto_csv(front, out / "pareto.csv")
    if args.svg:
        plots.write_scatter_svg(
            out / "search.svg",
            [c.latency_us for c in history],
            [c.accuracy for c in history],
            "latency_us",
            "accuracy",
            f"{args.algo} search, budget {args.budget}, seed {args.seed}",
        )
    best = max(history, key=lambda c: c.reward)
    under = [c.accuracy for c in history if c.latency_us <= args.target_latency_us]
    under_s = f"{max(under):.4f}" if under else "n/a"
    print(
        f"best_reward={best.reward:.6f} best_under_target_accuracy={under_s} "
        f"evaluations={len(history)} pareto_points={len(front)}"
    )
    return 0


def cmd_pareto(args) -> int:
    try:
        history = read_history_csv(args.history)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: bad history file: {e}", file=sys.stderr)
        return 1
    front = pareto_front(history)
    out = _outdir(args)
    write_pareto_csv(front, out / "pareto.csv")
    if args.svg:
        plots.write_scatter_svg(
            out / "pareto.svg",
            [p.latency_us for p in front],
            [p.accuracy for p in front],
            "latency_us",
            "accuracy",
            f"pareto front ({len(front)} points)",
        )
    print(f"pareto_points={len(front)}")
    return 0


def cmd_rmse_study(args) -> int:
    if args.n < 2:
        print("error: --n must be >= 2", file=sys.stderr)
        return 1
    cfg = _load_cfg(args)
    skeleton = load_skeleton(args.skeleton) if args.skeleton else DEFAULT_SKELETON
    report = rmse_study(args.n, args.seed, cfg, skeleton)
    out = _outdir(args)
    write_study_csv(report, out / "rmse_scatter.csv")
    if args.svg:
        plots.write_scatter_svg(
            out / "rmse_scatter.svg",
            [p[1] for p in report.pairs],
            [p[0] for p in report.pairs],
            "sim_us",
            "apm_us",
            f"APM vs simulator, n={args.n}",
            diagonal=True,
        )
    rho = "n/a" if report.spearman is None else f"{report.spearman:.4f}"
    print(f"n={args.n} rmse_us={report.rmse:.3f} spearman={rho} speedup={report.speedup:.1f}x")
    return 0


def cmd_crossover(args) -> int:
    cfg = _load_cfg(args)
    sizes = args.sizes or []
    cins = args.cin or []
    couts = args.cout or []
    expansions = args.expansions or []
    if not (sizes and cins and couts and expansions):
        print("error: empty sweep (need --sizes, --cin, --cout, --expansions)", file=sys.stderr)
        return 1
    try:
        rows = crossover_sweep(args.block_a, args.block_b, sizes, cins, couts, expansions,
                               cfg, args.estimator)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out = _outdir(args)
    write_sweep_csv(rows, out / "crossover.csv")
    if args.svg:
        # one heat map cell per (spatial size, cin), ratios reduced by median
        keys = sorted({(r["h"], r["cin"]) for r in rows})
        values = {}
        for h, cin in keys:
            cell = [r["ratio"] for r in rows if r["h"] == h and r["cin"] == cin]
            values[(f"{h}x{h}", f"cin{cin}")] = statistics.median(cell)
        plots.write_heatmap_svg(
            out / "crossover.svg",
            [f"{h}x{h}" for h in sorted({h for h, _ in keys})],
            [f"cin{c}" for c in sorted({c for _, c in keys})],
            values,
            "size",
            "cin",
            f"{args.block_a} / {args.block_b} latency ratio ({args.estimator})",
        )
    ratios = [r["ratio"] for r in rows]
    print(
        f"cells={len(rows)} min_ratio={min(ratios):.3f} max_ratio={max(ratios):.3f} "
        f"cells_below_1={sum(r < 1 for r in ratios)} cells_above_1={sum(r > 1 for r in ratios)}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    port = args.port if args.port is not None else int(os.environ.get("EDGENAS_PORT", "8080"))
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, port))
    except OSError as e:
        print(f"error: cannot bind {args.host}:{port}: {e}", file=sys.stderr)
        return 1
    finally:
        probe.close()
    app = create_app(config_dir=args.config_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgenas")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("estimate", help="estimate a model file's latency")
    _common_flags(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--estimator", choices=["apm", "sim"], default="apm")
    p.add_argument("--csv", type=Path, default=None, help="also write the breakdown CSV here")
    p.set_defaults(func=cmd_estimate)

    p = subs.add_parser("simulate", help="estimate with the tile simulator (= estimate --estimator sim)")
    _common_flags(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--csv", type=Path, default=None)
    p.set_defaults(func=cmd_estimate, estimator="sim")

    p = subs.add_parser("search", help="run architecture search, write history + pareto CSVs")
    _common_flags(p)
    p.add_argument("--target-latency-us", type=float, required=True)
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--algo", choices=["random", "evolution"], default="evolution")
    p.add_argument("--estimator", choices=["apm", "sim", "service"], default="apm")
    p.add_argument("--server-url", default=None, help="latency server for --estimator service")
    p.add_argument("--population", type=int, default=64)
    p.add_argument("--sample-size", type=int, default=16)
    p.add_argument("--reward-mode", choices=["soft", "hard"], default="soft")
    p.add_argument("--noise-sd", type=float, default=0.003, help="surrogate accuracy noise")
    p.add_argument("--skeleton", type=Path, default=None, help="stage skeleton TOML")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_search)

    p = subs.add_parser("pareto", help="extract the pareto front from a history CSV")
    _common_flags(p)
    p.add_argument("--history", type=Path, required=True)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_pareto)

    p = subs.add_parser("rmse-study", help="APM vs simulator agreement on random models")
    _common_flags(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--skeleton", type=Path, default=None)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_rmse_study)

    p = subs.add_parser("crossover", help="latency-ratio sweep between two block types")
    _common_flags(p)
    p.add_argument("--block-a", default="fused_ibn:k3")
    p.add_argument("--block-b", default="ibn:k3")
    p.add_argument("--sizes", type=int, nargs="*", default=[7, 14, 28, 56])
    p.add_argument("--cin", type=int, nargs="*", default=[1, 3, 8, 32, 128, 256])
    p.add_argument("--cout", type=int, nargs="*", default=[32, 128, 256])
    p.add_argument("--expansions", type=int, nargs="*", default=[1, 3, 6])
    p.add_argument("--estimator", choices=["apm", "sim"], default="apm")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_crossover)

    p = subs.add_parser("serve", help="run the latency-estimation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None, help="default: $EDGENAS_PORT or 8080")
    p.add_argument("--config-dir", default=None, help="default: $EDGENAS_CONFIG_DIR or built-ins")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
