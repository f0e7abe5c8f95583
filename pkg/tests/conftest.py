import numpy as np
import pytest
from hypothesis import settings

from stabtopo.problems import double_clamped_beam

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_beam():
    return double_clamped_beam(8, 4, load=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel(a, b, floor=1e-300):
    """Max-norm relative difference, with ``floor`` guarding tiny references."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


# --------------------------------------------------------------------------
# acceptance-criterion report: one PASS/FAIL line per criterion

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n = mark.args[0]
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    _criteria[n] = (status, (item.function.__doc__ or "").strip().splitlines()[0], detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, detail = _criteria[n]
        line = f"criterion {n}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
