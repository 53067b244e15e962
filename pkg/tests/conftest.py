import pytest

from edgenas.accel import AcceleratorConfig
from edgenas.ir import load_model
from edgenas.service.app import builtin_config_dir


@pytest.fixture(scope="session")
def toy_cfg():
    # 4x4 array at 1 MHz (16 MMAC/s peak), 1 MB/s DRAM, 8 MB/s bus
    return AcceleratorConfig(
        array_rows=4, array_cols=4, clock_hz=1e6, dram_bw=1e6,
        onchip_bus_bw=8e6, buffer_bytes=1 << 20, bytes_per_element=1,
    )


@pytest.fixture(scope="session")
def default_cfg():
    from edgenas.accel import load_config

    return load_config(builtin_config_dir() / "edgetpu_like.toml")


@pytest.fixture(scope="session")
def fixtures_dir():
    from importlib import resources
    from pathlib import Path

    return Path(resources.files("edgenas") / "fixtures")


@pytest.fixture(scope="session")
def mobilenet_graph(fixtures_dir):
    return load_model(fixtures_dir / "mobilenet_v2_like.json")


@pytest.fixture(scope="session")
def tiny_graph(fixtures_dir):
    return load_model(fixtures_dir / "tiny3.json")
