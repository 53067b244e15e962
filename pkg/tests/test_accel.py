import random

import pytest

from edgenas.accel import (
    AcceleratorConfig,
    ConfigError,
    breakdown_rows,
    estimate_layer,
    estimate_model,
    load_config,
    traffic,
    utilization,
)
from edgenas.ir import (
    Conv2D,
    Dense,
    DepthwiseConv,
    FusedIBNBlock,
    GlobalAvgPool,
    IBNBlock,
    ModelGraph,
    ModelValidationError,
    TensorShape,
    count_macs,
    infer_shapes,
    sublayers,
)


def random_primitive(rng, allow_dense=True):
    kind = rng.randrange(6 if allow_dense else 5)
    if kind == 0:
        return Conv2D(rng.choice([1, 3, 5]), rng.choice([1, 2]), rng.randint(1, 96))
    if kind == 1:
        return DepthwiseConv(rng.choice([3, 5]), rng.choice([1, 2]))
    if kind == 2:
        return IBNBlock(rng.choice([3, 5]), rng.choice([1, 2]), rng.choice([1, 3, 6]), rng.randint(1, 96))
    if kind == 3:
        return FusedIBNBlock(rng.choice([3, 5]), rng.choice([1, 2]), rng.choice([1, 3, 6]), rng.randint(1, 96))
    if kind == 4:
        return GlobalAvgPool()
    return Dense(rng.randint(1, 1000))


def random_case(rng):
    layer = random_primitive(rng)
    if isinstance(layer, Dense):
        return layer, TensorShape(1, 1, rng.randint(1, 256))
    lo = 2 if getattr(layer, "stride", 1) == 2 else 1
    return layer, TensorShape(rng.randint(lo, 48), rng.randint(lo, 48), rng.randint(1, 96))


def random_cfg(rng):
    dram = rng.uniform(1e5, 1e9)
    return AcceleratorConfig(
        array_rows=rng.choice([2, 4, 8, 64]),
        array_cols=rng.choice([2, 4, 16, 64]),
        clock_hz=rng.uniform(1e5, 1e9),
        dram_bw=dram,
        onchip_bus_bw=dram * rng.uniform(1.0, 32.0),
        buffer_bytes=rng.choice([256, 4096, 1 << 20, 8 << 20]),
        bytes_per_element=rng.choice([1, 2]),
    )


# --- config --------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ConfigError):
        AcceleratorConfig(0, 4, 1e6, 1e6, 8e6, 1024)
    with pytest.raises(ConfigError):
        AcceleratorConfig(4, 4, 1e6, 1e6, 8e6, 0)
    with pytest.raises(ConfigError):
        AcceleratorConfig(4, 4, 1e6, 8e6, 1e6, 1024)  # bus slower than dram


def test_config_toml_roundtrip(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("array_rows = 8\narray_cols = 16\nclock_hz = 2e6\ndram_bw = 1e6\n"
                    "onchip_bus_bw = 8e6\nbuffer_bytes = 4096\nbytes_per_element = 2\n")
    cfg = load_config(path)
    assert cfg == AcceleratorConfig(8, 16, 2e6, 1e6, 8e6, 4096, 2)


def test_config_unknown_field_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("array_rows = 8\narray_cols = 16\nclock_hz = 2e6\ndram_bw = 1e6\n"
                    "onchip_bus_bw = 8e6\nbuffer_bytes = 4096\nvoltage = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


# --- traffic -------------------------------------------------------------

def test_traffic_examples(toy_cfg):
    # params 1152 + in 2048 + out 4096, buffer large enough: no refetch
    assert traffic(Conv2D(3, 1, 16), TensorShape(16, 16, 8), toy_cfg) == (7_296, 6_144)
    assert traffic(GlobalAvgPool(), TensorShape(7, 7, 64), toy_cfg) == (3_200, 3_200)
    small = AcceleratorConfig(4, 4, 1e6, 1e6, 8e6, 4096, 1)
    # working set 7296 -> refetch factor 2 on the 6144 activation bytes
    assert traffic(Conv2D(3, 1, 16), TensorShape(16, 16, 8), small) == (13_440, 6_144)


def test_traffic_block_is_sum_of_sublayers(toy_cfg):
    layer = IBNBlock(3, 2, 6, 24)
    shape = TensorShape(14, 14, 16)
    parts = [traffic(sub, s, toy_cfg) for sub, s in sublayers(layer, shape)]
    assert traffic(layer, shape, toy_cfg) == (sum(p[0] for p in parts), sum(p[1] for p in parts))


# --- utilization ----------------------------------------------------------

def test_utilization_examples(toy_cfg):
    assert utilization(Conv2D(3, 1, 16), TensorShape(16, 16, 8), toy_cfg) == 1.0
    big = AcceleratorConfig(64, 64, 1e6, 1e6, 8e6, 1 << 20, 1)
    assert utilization(Conv2D(3, 1, 64), TensorShape(16, 16, 3), big) == 27 / 64


def test_depthwise_utilization_capped_at_one_over_rows():
    rng = random.Random(3)
    for _ in range(200):
        cfg = random_cfg(rng)
        c = rng.randint(1, 256)
        u = utilization(DepthwiseConv(rng.choice([3, 5]), 1), TensorShape(8, 8, c), cfg)
        assert 0 < u <= 1 / cfg.array_rows + 1e-15


def test_utilization_in_unit_interval():
    rng = random.Random(4)
    for _ in range(300):
        layer, shape = random_case(rng)
        u = utilization(layer, shape, random_cfg(rng))
        assert 0 < u <= 1.0


# --- estimate_layer -------------------------------------------------------

def test_estimate_layer_toy_compute_bound(toy_cfg):
    ll = estimate_layer(Conv2D(3, 1, 16), TensorShape(16, 16, 8), toy_cfg)
    assert ll.compute_us == 18_432.0
    assert ll.dram_us == 7_296.0
    assert ll.bus_us == 768.0
    assert ll.latency_us == 18_432.0
    assert ll.bound == "compute"
    assert ll.utilization == 1.0


def test_estimate_layer_toy_dram_bound(toy_cfg):
    ll = estimate_layer(Conv2D(1, 1, 4), TensorShape(64, 64, 4), toy_cfg)
    assert ll.compute_us == 4_096.0
    assert ll.dram_us == 32_784.0
    assert ll.bound == "dram"


def test_infinite_bandwidth_degenerates_to_compute():
    rng = random.Random(5)
    inf = float("inf")
    cfg = AcceleratorConfig(4, 4, 1e6, inf, inf, 1 << 40, 1)
    for _ in range(100):
        layer, shape = random_case(rng)
        ll = estimate_layer(layer, shape, cfg)
        assert ll.latency_us == ll.compute_us


def test_bound_tie_breaks():
    # compute == dram exactly: Dense(2) on 1x1x2 -> macs 4, u 1/4, bytes 8
    cfg = AcceleratorConfig(4, 4, 1e6, 8e6, 8e6, 1 << 20, 1)
    ll = estimate_layer(Dense(2), TensorShape(1, 1, 2), cfg)
    assert ll.compute_us == ll.dram_us == 1.0
    assert ll.bound == "compute"
    # dram == bus exactly (same bytes, same bandwidth), zero compute
    cfg2 = AcceleratorConfig(4, 4, 1e6, 1e6, 1e6, 1 << 20, 1)
    ll2 = estimate_layer(GlobalAvgPool(), TensorShape(7, 7, 64), cfg2)
    assert ll2.dram_us == ll2.bus_us == 3_200.0
    assert ll2.bound == "dram"


def test_layer_latency_is_max_of_ceilings():
    rng = random.Random(6)
    for _ in range(300):
        layer, shape = random_case(rng)
        ll = estimate_layer(layer, shape, random_cfg(rng))
        assert ll.latency_us == max(ll.compute_us, ll.dram_us, ll.bus_us)


def test_estimate_matches_compositional_ops():
    # the inlined hot path must agree with count_macs/utilization/traffic
    rng = random.Random(7)
    for _ in range(500):
        layer, shape = random_case(rng)
        cfg = random_cfg(rng)
        ll = estimate_layer(layer, shape, cfg)
        d, b = traffic(layer, shape, cfg)
        assert ll.dram_us == d / cfg.dram_bw * 1e6
        assert ll.bus_us == b / cfg.onchip_bus_bw * 1e6
        macs = count_macs(layer, shape)
        if macs:
            u = utilization(layer, shape, cfg)
            peak = cfg.array_rows * cfg.array_cols * cfg.clock_hz
            assert ll.compute_us == pytest.approx(macs / (peak * u) * 1e6, rel=1e-12)
            assert ll.utilization == pytest.approx(u, rel=1e-12)
        else:
            assert ll.compute_us == 0.0 and ll.utilization == 1.0


def test_lower_bounds():
    rng = random.Random(8)
    for _ in range(300):
        layer, shape = random_case(rng)
        cfg = random_cfg(rng)
        ll = estimate_layer(layer, shape, cfg)
        peak = cfg.array_rows * cfg.array_cols * cfg.clock_hz
        assert ll.latency_us >= count_macs(layer, shape) / peak * 1e6 * (1 - 1e-12)
        d, _ = traffic(layer, shape, cfg)
        assert ll.latency_us >= d / cfg.dram_bw * 1e6 * (1 - 1e-12)


def _bumped(cfg, field, factor):
    values = {
        "array_rows": cfg.array_rows, "array_cols": cfg.array_cols, "clock_hz": cfg.clock_hz,
        "dram_bw": cfg.dram_bw, "onchip_bus_bw": cfg.onchip_bus_bw,
        "buffer_bytes": cfg.buffer_bytes, "bytes_per_element": cfg.bytes_per_element,
    }
    if field == "buffer_bytes":
        values[field] = int(values[field] * factor)
    else:
        values[field] = values[field] * factor
    if field == "dram_bw" and values["dram_bw"] > values["onchip_bus_bw"]:
        values["onchip_bus_bw"] = values["dram_bw"]
    return AcceleratorConfig(**values)


def test_monotonicity_in_resources():
    rng = random.Random(9)
    for _ in range(200):
        layer, shape = random_case(rng)
        cfg = random_cfg(rng)
        base = estimate_layer(layer, shape, cfg).latency_us
        for field in ("dram_bw", "onchip_bus_bw", "clock_hz", "buffer_bytes"):
            up = estimate_layer(layer, shape, _bumped(cfg, field, rng.uniform(1.5, 8.0))).latency_us
            assert up <= base * (1 + 1e-12), (layer, shape, field)


# --- estimate_model -------------------------------------------------------

def test_estimate_model_rejects_invalid():
    cfg = AcceleratorConfig(4, 4, 1e6, 1e6, 8e6, 1 << 20, 1)
    with pytest.raises(ModelValidationError):
        estimate_model(ModelGraph("e", TensorShape(8, 8, 3), ()), cfg)
    bad = ModelGraph("b", TensorShape(8, 8, 3), (IBNBlock(3, 2, 6, 8, residual=True),))
    with pytest.raises(ModelValidationError) as exc:
        estimate_model(bad, cfg)
    assert any(v.code == "residual_shape_mismatch" for v in exc.value.violations)


def test_estimate_model_single_layer(toy_cfg):
    g = ModelGraph("one", TensorShape(16, 16, 8), (Conv2D(3, 1, 16),))
    bd = estimate_model(g, toy_cfg)
    assert bd.total_us == bd.per_layer[0].latency_us == 18_432.0
    assert bd.macs == 294_912


def test_estimate_model_equals_per_layer_estimates(mobilenet_graph, toy_cfg, default_cfg):
    for cfg in (toy_cfg, default_cfg):
        bd = estimate_model(mobilenet_graph, cfg)
        shapes = infer_shapes(mobilenet_graph)
        per = [estimate_layer(layer, s_in, cfg)
               for layer, (s_in, _) in zip(mobilenet_graph.layers, shapes)]
        assert list(bd.per_layer) == per
        assert bd.total_us == sum(ll.latency_us for ll in per)
        assert len(bd.per_layer) == len(mobilenet_graph.layers)


def test_estimate_model_deterministic(mobilenet_graph, default_cfg):
    a = estimate_model(mobilenet_graph, default_cfg)
    b = estimate_model(mobilenet_graph, default_cfg)
    assert a == b


def test_breakdown_rows_shape(tiny_graph, default_cfg):
    bd = estimate_model(tiny_graph, default_cfg)
    rows = breakdown_rows(tiny_graph, bd)
    assert [r["name"] for r in rows] == ["conv2d_0", "gap_1", "dense_2"]
    assert set(rows[0]) == {"name", "latency_us", "bound", "compute_us", "dram_us", "bus_us"}
