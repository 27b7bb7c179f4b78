"""Prints one PASS/FAIL line per acceptance criterion after the run."""
import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if rep.when == "call" or failed:
        measured = dict(item.user_properties).get("measured", "")
        prev = _RESULTS.get(n, (True, text, ""))
        if measured and measured not in prev[2]:
            measured = "; ".join(m for m in (prev[2], measured) if m)
        _RESULTS[n] = (prev[0] and not failed, text, measured or prev[2])


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, text, measured = _RESULTS[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {text}"
        tr.write_line(line + (f"  [{measured}]" if measured else ""))
