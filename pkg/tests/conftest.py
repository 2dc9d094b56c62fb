import math

import numpy as np
import pytest

from kropina import cylinder_space, euclidean_space, sphere_space, torus_space

S2 = 1 / math.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def model_spaces():
    return {
        "euclidean": euclidean_space(2, [1.0, 0.0]),
        "sphere": sphere_space(3),
        "cylinder": cylinder_space(0.6, 0.8),
        "torus": torus_space(),
    }


def random_unit(rng, n):
    z = rng.normal(size=n)
    return z / np.linalg.norm(z)


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n = mark.args[0]
    prev = _CRITERIA.get(n, (True, 0.0))
    _CRITERIA[n] = (prev[0] and rep.passed, prev[1] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, secs = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({secs:.2f} s)")
