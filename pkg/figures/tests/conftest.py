"""Fixtures: sample run directories produced through the simulator CLI.

The figures package depends only on the on-disk formats, so fixtures are
generated by invoking the simulator as a subprocess.
"""

import json
import subprocess
import sys

import pytest


def _cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "stargrowth.cli", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="session")
def trajectory_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "sim"
    _cli("simulate", "--rules", "boundary_prop_origin", "--shape", "sunflower",
         "--eps", "0.02", "--T", "0.3", "--M", "128", "--seed", "1",
         "--out", str(out))
    return out


@pytest.fixture(scope="session")
def lattice_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "lat"
    _cli("lattice", "--walk", "orrw", "--steps", "3000", "--seed", "2",
         "--out", str(out))
    return out


@pytest.fixture(scope="session")
def sweep_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    out = base / "sweep"
    cfg = base / "sweep.json"
    cfg.write_text(json.dumps({
        "rules": "uniform_origin", "shape": "ball",
        "eps_list": [0.1, 0.05], "seeds": [0, 1, 2], "T": 0.2, "M": 128,
        "out": str(out),
    }))
    _cli("sweep", "--config", str(cfg))
    return out


@pytest.fixture(scope="session")
def kernel_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    out = base / "kernels"
    cfg = base / "vk.json"
    cfg.write_text(json.dumps({
        "etas": [0.1, 0.2], "M": 1024, "n_exits": 2000, "out": str(out),
    }))
    _cli("validate-kernels", "--config", str(cfg))
    return out
