import pytest

_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.stash[_CRITERIA_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        item.config.stash[_CRITERIA_KEY][marker.args[0]] = (status, rep.duration, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash[_CRITERIA_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, dur, detail = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status} ({dur:.1f}s) {detail}")
