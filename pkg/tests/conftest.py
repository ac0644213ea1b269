import numpy as np
import pytest

from aerochannel import dmc


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_channel(rng, n_in, n_out, sparsity=0.0):
    t = rng.random((n_in, n_out))
    if sparsity:
        t[rng.random(t.shape) < sparsity] = 0.0
        for i in np.flatnonzero(t.sum(axis=1) == 0):
            t[i, rng.integers(n_out)] = 1.0
    t /= t.sum(axis=1, keepdims=True)
    return dmc.DmcChannel.from_matrix(t)


def random_input(rng, n):
    p = rng.random(n)
    return dmc.InputDistribution(p / p.sum())


# -- acceptance report -------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    key = (number, title)
    if report.failed or report.when == "call":
        ok = report.passed and _CRITERIA.get(key, True)
        _CRITERIA[key] = ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}")
