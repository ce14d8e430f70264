import time

import numpy as np
import pytest

from taperqed import config
from taperqed.bundle import write_bundle
from taperqed.coupling import coupling_table, fiber_modes
from taperqed.geometry import CrossSectionSpec, GridSpec, rasterize
from taperqed.modesolver import solve_modes
from taperqed.pipeline import sweep


@pytest.fixture(scope="session")
def grid():
    return GridSpec()


@pytest.fixture(scope="session")
def spec220():
    return CrossSectionSpec(channel_width=220)


@pytest.fixture(scope="session")
def pmap220(spec220, grid):
    return rasterize(spec220, grid)


@pytest.fixture(scope="session")
def basis220(pmap220):
    return solve_modes(pmap220, 1.3)


@pytest.fixture(scope="session")
def fibers(spec220, grid):
    return fiber_modes(spec220, grid)


@pytest.fixture(scope="session")
def ctab220(basis220, fibers):
    return coupling_table(basis220, fibers)


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory):
    """The default 190-350 nm sweep, solved once per session, with its bundle."""
    cfg = config.build({}, env={}, output=str(tmp_path_factory.mktemp("bundle")))
    t0 = time.perf_counter()
    res = sweep(cfg)
    res.wall_time_s = time.perf_counter() - t0
    manifest = write_bundle(res, cfg.sweep.output)
    return res, manifest


@pytest.fixture
def rng():
    return np.random.default_rng(20091)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
