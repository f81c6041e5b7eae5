import pytest

from prilsim.engine import run
from prilsim.scenario import assign_technique, builtin

DAY = 86400 * 1_000_000
YEAR = 365 * DAY

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "ran": False})
    if rep.when == "call":
        entry["ran"] = True
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {e['title']}")


class RunCache:
    """Memoised engine runs of the fig1 scenario, shared across tests."""

    def __init__(self):
        self._runs = {}

    def get(self, technique, r=4, duration=YEAR, **overrides):
        key = (technique, r, duration, tuple(sorted(overrides.items())))
        if key not in self._runs:
            sc = builtin("fig1", duration=f"{duration}us", **overrides)
            self._runs[key] = run(assign_technique(sc, technique, r))
        return self._runs[key]


@pytest.fixture(scope="session")
def fig1_runs():
    return RunCache()
