import time

import numpy as np
import pytest

from e3fi.catalog import load_catalog, verify_entry
from e3fi.sampling import sample_points

# criterion number -> list of (test name, passed, detail)
CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): the test checks acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        passed = rep.passed and not hasattr(rep, "wasxfail")
        if hasattr(rep, "wasxfail") and not detail:
            detail = rep.wasxfail
        CRITERIA.setdefault(mark.args[0], []).append((item.name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        parts = CRITERIA[n]
        ok = all(p for _, p, _ in parts)
        failed = [f"{name}: {d}" if d else name for name, p, d in parts if not p]
        notes = "; ".join(failed) if failed else "; ".join(d for _, _, d in parts if d)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {notes}")


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def by_id(catalog):
    return {e.id: e for e in catalog}


@pytest.fixture(scope="session")
def timed_reports(catalog):
    """Full verification of every bundled entry and the wall time it took."""
    t0 = time.perf_counter()
    reps = {e.id: verify_entry(e) for e in catalog}
    return reps, time.perf_counter() - t0


@pytest.fixture(scope="session")
def reports(timed_reports):
    return timed_reports[0]


@pytest.fixture
def samples():
    return sample_points(200, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
