import csv
import socket

import pytest

from edgenas.cli import main
from edgenas.search import read_history_csv
from edgenas.studies import StudyReport


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as e:
        code = e.code
    out = capsys.readouterr()
    return code, out.out, out.err


def total_from_stdout(stdout: str) -> float:
    for line in stdout.splitlines():
        if line.startswith("total_latency_us="):
            return float(line.split("=", 1)[1])
    raise AssertionError(f"no total line in {stdout!r}")


def test_estimate_fixture(capsys, fixtures_dir, tiny_graph, default_cfg):
    from edgenas.accel import estimate_model

    code, out, err = run(capsys, "estimate", "--model", str(fixtures_dir / "tiny3.json"))
    assert code == 0
    assert total_from_stdout(out) == pytest.approx(estimate_model(tiny_graph, default_cfg).total_us, abs=5e-4)
    assert "conv2d_0" in out and "dense_2" in out


def test_estimate_with_toy_config_matches_module_values(capsys, fixtures_dir, tmp_path, toy_cfg):
    # single conv layer whose toy-config numbers are pinned in the accel tests
    model = tmp_path / "one.json"
    model.write_text(
        '{"name": "one", "input": {"h": 16, "w": 16, "c": 8},'
        ' "layers": [{"op": "conv2d", "kernel": 3, "stride": 1, "out_channels": 16}]}'
    )
    cfg = tmp_path / "toy.toml"
    cfg.write_text(
        "array_rows = 4\narray_cols = 4\nclock_hz = 1e6\ndram_bw = 1e6\n"
        "onchip_bus_bw = 8e6\nbuffer_bytes = 1048576\nbytes_per_element = 1\n"
    )
    code, out, _ = run(capsys, "estimate", "--model", str(model), "--config", str(cfg))
    assert code == 0
    assert total_from_stdout(out) == 18432.0


def test_estimate_csv_artifact(capsys, fixtures_dir, tmp_path):
    csv_path = tmp_path / "breakdown.csv"
    code, out, _ = run(capsys, "estimate", "--model", str(fixtures_dir / "tiny3.json"),
                       "--csv", str(csv_path))
    assert code == 0
    rows = list(csv.DictReader(csv_path.open()))
    assert [r["name"] for r in rows] == ["conv2d_0", "gap_1", "dense_2"]
    assert set(rows[0]) == {"name", "latency_us", "bound", "compute_us", "dram_us", "bus_us"}


def test_estimate_missing_file_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "estimate", "--model", str(tmp_path / "nope.json"))
    assert code == 1
    assert "error" in err


def test_estimate_bad_config_exit_1(capsys, fixtures_dir, tmp_path):
    code, _, err = run(capsys, "estimate", "--model", str(fixtures_dir / "tiny3.json"),
                       "--config", str(tmp_path / "nope.toml"))
    assert code == 1 and "bad accelerator config" in err
    broken = tmp_path / "broken.toml"
    broken.write_text("array_rows = -1\narray_cols = 4\nclock_hz = 1e6\ndram_bw = 1e6\n"
                      "onchip_bus_bw = 8e6\nbuffer_bytes = 64\n")
    code, _, err = run(capsys, "estimate", "--model", str(fixtures_dir / "tiny3.json"),
                       "--config", str(broken))
    assert code == 1 and "must be positive" in err


def test_estimate_malformed_json_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", ')
    code, _, err = run(capsys, "estimate", "--model", str(bad))
    assert code == 1
    assert "malformed" in err


def test_estimate_unsupported_op_exit_2(capsys, tmp_path):
    bad = tmp_path / "swish.json"
    bad.write_text('{"name": "x", "input": {"h": 8, "w": 8, "c": 3}, "layers": [{"op": "swish"}]}')
    code, _, err = run(capsys, "estimate", "--model", str(bad))
    assert code == 2
    assert "unsupported_op" in err and "swish" in err


def test_simulate_subcommand(capsys, fixtures_dir, tiny_graph, default_cfg):
    from edgenas.simulator import simulate_model

    code, out, _ = run(capsys, "simulate", "--model", str(fixtures_dir / "tiny3.json"))
    assert code == 0
    assert total_from_stdout(out) == pytest.approx(simulate_model(tiny_graph, default_cfg).total_us, abs=5e-4)


def test_search_deterministic_outputs(capsys, tmp_path):
    args = ["search", "--target-latency-us", "800", "--budget", "60", "--algo", "random",
            "--population", "16", "--sample-size", "4", "--seed", "7", "--noise-sd", "0.003"]
    code, out, _ = run(capsys, *args, "--out", str(tmp_path / "a"))
    assert code == 0
    assert "best_reward=" in out and "best_under_target_accuracy=" in out
    code, _, _ = run(capsys, *args, "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "a" / "history.csv").read_bytes() == (tmp_path / "b" / "history.csv").read_bytes()
    assert (tmp_path / "a" / "pareto.csv").read_bytes() == (tmp_path / "b" / "pareto.csv").read_bytes()


def test_search_pareto_has_no_dominated_rows(capsys, tmp_path):
    from oracles import pareto_brute_force

    code, _, _ = run(capsys, "search", "--target-latency-us", "800", "--budget", "80",
                     "--algo", "evolution", "--population", "16", "--sample-size", "4",
                     "--seed", "3", "--out", str(tmp_path))
    assert code == 0
    history = read_history_csv(tmp_path / "history.csv")
    assert len(history) == 80
    front_rows = list(csv.DictReader((tmp_path / "pareto.csv").open()))
    brute = pareto_brute_force(history)
    assert [(float(r["latency_us"]), float(r["accuracy"])) for r in front_rows] == [
        (c.latency_us, c.accuracy) for c in brute
    ]


def test_search_flag_validation_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "search", "--target-latency-us", "-5", "--budget", "50",
                       "--out", str(tmp_path))
    assert code == 1 and "error" in err
    code, _, err = run(capsys, "search", "--target-latency-us", "800", "--budget", "5",
                       "--population", "64", "--out", str(tmp_path))
    assert code == 1 and "error" in err
    code, _, err = run(capsys, "search", "--target-latency-us", "800", "--budget", "20",
                       "--population", "8", "--sample-size", "4",
                       "--estimator", "service", "--out", str(tmp_path))
    assert code == 1 and "service_url" in err


def test_search_svg_is_derived_artifact(capsys, tmp_path):
    args = ["search", "--target-latency-us", "800", "--budget", "40", "--algo", "random",
            "--seed", "2", "--population", "8", "--sample-size", "4"]
    run(capsys, *args, "--out", str(tmp_path / "plain"))
    run(capsys, *args, "--svg", "--out", str(tmp_path / "svg"))
    assert (tmp_path / "plain" / "history.csv").read_bytes() == (tmp_path / "svg" / "history.csv").read_bytes()
    svg = (tmp_path / "svg" / "search.svg").read_text()
    assert svg.startswith("<svg") and "circle" in svg


def test_pareto_subcommand(capsys, tmp_path):
    run(capsys, "search", "--target-latency-us", "800", "--budget", "40", "--algo", "random",
        "--seed", "2", "--population", "8", "--sample-size", "4", "--out", str(tmp_path / "s"))
    code, out, _ = run(capsys, "pareto", "--history", str(tmp_path / "s" / "history.csv"),
                       "--out", str(tmp_path / "p"))
    assert code == 0 and "pareto_points=" in out
    assert (tmp_path / "p" / "pareto.csv").read_bytes() == (tmp_path / "s" / "pareto.csv").read_bytes()
    code, _, err = run(capsys, "pareto", "--history", str(tmp_path / "missing.csv"),
                       "--out", str(tmp_path / "p2"))
    assert code == 1


def test_rmse_study_small(capsys, tmp_path):
    code, out, _ = run(capsys, "rmse-study", "--n", "8", "--seed", "1", "--out", str(tmp_path), "--svg")
    assert code == 0
    assert "rmse_us=" in out and "spearman=" in out and "speedup=" in out
    rows = list(csv.DictReader((tmp_path / "rmse_scatter.csv").open()))
    assert len(rows) == 8 and set(rows[0]) == {"apm_us", "sim_us"}
    assert (tmp_path / "rmse_scatter.svg").exists()


def test_rmse_study_rejects_n_below_2(capsys, tmp_path):
    code, _, err = run(capsys, "rmse-study", "--n", "1", "--out", str(tmp_path))
    assert code == 1


def test_rmse_study_reports_na_correlation(capsys, tmp_path, monkeypatch):
    import edgenas.cli as cli_mod

    def canned(n, seed, cfg, skeleton):
        return StudyReport(pairs=((1.0, 2.0), (1.0, 2.0)), rmse=1.0, spearman=None, speedup=123.0)

    monkeypatch.setattr(cli_mod, "rmse_study", canned)
    code, out, _ = run(capsys, "rmse-study", "--n", "2", "--out", str(tmp_path))
    assert code == 0
    assert "spearman=n/a" in out


def test_crossover_default_sweep_shows_both_regimes(capsys, tmp_path):
    code, out, _ = run(capsys, "crossover", "--out", str(tmp_path),
                       "--sizes", "7", "14", "--cin", "8", "256", "--cout", "64",
                       "--expansions", "6", "--svg")
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "crossover.csv").open()))
    ratios = [float(r["ratio"]) for r in rows]
    assert any(r < 1 for r in ratios) and any(r > 1 for r in ratios)
    assert (tmp_path / "crossover.svg").exists()


def test_crossover_self_sweep_is_identity(capsys, tmp_path):
    code, _, _ = run(capsys, "crossover", "--block-a", "ibn:k3", "--block-b", "ibn:k3",
                     "--sizes", "7", "14", "--cin", "4", "32", "--cout", "16",
                     "--expansions", "1", "6", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "crossover.csv").open()))
    assert rows and all(float(r["ratio"]) == 1.0 for r in rows)


def test_crossover_empty_sweep_exit_1(capsys, tmp_path):
    code, _, err = run(capsys, "crossover", "--sizes", "--out", str(tmp_path))
    assert code == 1 and "empty sweep" in err


def test_crossover_bad_block_token(capsys, tmp_path):
    code, _, err = run(capsys, "crossover", "--block-a", "resnet:k3",
                       "--sizes", "7", "--cin", "4", "--cout", "8",
                       "--expansions", "1", "--out", str(tmp_path))
    assert code == 1


def test_serve_occupied_port_exit_1(capsys):
    blocker = socket.socket()
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        code = main(["serve", "--port", str(port)])
    finally:
        blocker.close()
    out = capsys.readouterr()
    assert code == 1
    assert "cannot bind" in out.err
