import pytest

from graphfree.tensor import make_rng

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def acceptance(request):
    """Record ``(passed, detail)`` for one numbered acceptance criterion."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, passed, detail):
        results[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
