import numpy as np
import pytest

from cfmsr.tensor_core import RngStream


@pytest.fixture
def rng():
    return RngStream(12345, 0)


def numgrad(f, x, h=1e-4, coords=None):
    """Central finite differences of scalar ``f`` at ``x`` (float64), optionally at selected flat coords."""
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    out = {}
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out


# --- acceptance report: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    n = marker.args[0]
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    details = "; ".join(v for k, v in item.user_properties if k == "detail")
    _ACCEPTANCE.setdefault(n, []).append((status, details or item.name))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        states = {s for s, _ in parts}
        status = "FAIL" if "FAIL" in states else "SKIP" if "SKIP" in states else "PASS"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  " + " | ".join(d for _, d in parts))
