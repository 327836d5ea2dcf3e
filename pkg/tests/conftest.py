import numpy as np
import pytest

from spadfab.frontend import EdgeStream


def random_pulse_stream(rng, horizon_ps, rate_hz, max_width_ps):
    """Non-overlapping pulses from a Poisson start process, widths in [1, max_width]."""
    n = rng.poisson(rate_hz * horizon_ps * 1e-12)
    starts = np.sort(rng.integers(0, horizon_ps, n))
    edges = []
    free = -1
    for s in starts:
        if s <= free:
            continue
        w = int(rng.integers(1, max_width_ps + 1))
        edges += [int(s), int(s) + w]
        free = s + w
    return EdgeStream(edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record_criterion(number, title, passed, detail=""):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
