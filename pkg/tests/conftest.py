import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_KEY] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        details = [f"{k}={v}" for k, v in item.user_properties]
        item.config.stash[_KEY].append((mark.args[0], mark.args[1], rep.outcome, rep.duration, details))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config.stash[_KEY])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, duration, details in rows:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number} {status} ({duration:.1f}s) {title}")
        for d in details:
            terminalreporter.write_line(f"    {d}")
