import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="also run the long simulation checks marked slow")


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="long simulation check; enable with --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def criterion(request):
    """Record one acceptance check: ``criterion(number, ok, detail)``.

    A criterion passes only when every check recorded under its number passed.
    """
    store = request.config.stash[_VERDICTS]

    def record(number, ok, detail):
        store.setdefault(number, []).append((bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash[_VERDICTS]
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        checks = store[number]
        verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        detail = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {detail}")
