import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    line = f"{'PASS' if rep.passed else 'FAIL'}  criterion {n:>2}: {title}"
    if detail:
        line += f"  [{detail}]"
    item.config._criteria.append((n, line))
    # also shown inline with -s
    print("\n" + line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config._criteria)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
