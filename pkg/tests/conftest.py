import numpy as np
import pytest

from softbolt.collision.grid import VelocityGrid
from softbolt.collision.operator import assemble_operator


@pytest.fixture(scope="session")
def op_cache(request):
    """Persistent cache for assembled operators (pytest's cache directory)."""
    return request.config.cache.mkdir("softbolt-operators")


@pytest.fixture(scope="session")
def small_grid():
    # h * V_max = 4.6: coarse but still inside the range where ratio interpolation is stable
    return VelocityGrid(4.0, 8)


@pytest.fixture(scope="session")
def small_op(small_grid, op_cache):
    return assemble_operator(small_grid, -1.0, cache_dir=op_cache)


@pytest.fixture(scope="session")
def default_op(op_cache):
    return assemble_operator(VelocityGrid(6.0, 16), -1.0, cache_dir=op_cache)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(number, title, ok, detail)."""
    def record(number, title, ok, detail=""):
        request.config.stash[_RESULTS].append((number, title, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config.stash.get(_RESULTS, []), key=lambda r: r[0])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in rows:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2} {title}: {detail}")
