import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the criterion summary."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or rep.failed:
        details = [v for k, v in item.user_properties if k == "detail"]
        prev = _RESULTS.get(n)
        passed = rep.passed and (prev is None or prev[1])
        _RESULTS[n] = (title, passed, details)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, passed, details = _RESULTS[n]
        tr.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {title}")
        for d in details:
            tr.write_line(f"    {d}")
