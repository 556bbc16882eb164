import json

import pytest

TINY = {
    "geometry": {"facets": 16},
    "frequencies": {"count": 2},
    "grid": {"counts": [3, 3]},
    "objective": {"designs": [{"column": "capacity"}, {"column": "null_steering"}]},
    "optimizer": {"max_iterations": 12},
    "evaluation": {"sparsity": [1, 2], "trials": 4},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY, indent=1))
    return path


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n = mark.args[0]
    status = item.config._criteria.get(n, "PASS")
    if rep.failed or rep.skipped:
        status = "FAIL"
    item.config._criteria[n] = status


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config._criteria
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(f"criterion {n}: {results[n]}")
