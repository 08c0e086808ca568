import pytest

_RESULTS_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = {}


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one verdict per acceptance criterion: ``acceptance(n, ok, detail)``."""
    results = request.config.stash[_RESULTS_KEY]

    def record(criterion, status, detail):
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        results[criterion] = (status, detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS_KEY, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(results):
        status, detail = results[n]
        terminalreporter.write_line(f"{status} criterion {n}: {detail}")
