import functools

import pytest

from causal_energy import scm


def pytest_addoption(parser):
    group = parser.getgroup("real data")
    group.addoption("--load-csv", default=None, help="hourly load export (timestamp, MW) for data-dependent checks")
    group.addoption("--weather-csv", default=None, help="hourly weather export matching --load-csv")


@functools.lru_cache(maxsize=None)
def simulated(hours: int, seed: int, **overrides):
    """Cached synthetic datasets; Dataset is immutable so sharing is safe."""
    return scm.simulate_dataset(scm.default_params(**overrides), hours, seed)


@pytest.fixture(scope="session")
def params():
    return scm.default_params()


@pytest.fixture(scope="session")
def year():
    return simulated(8760, 0)


@pytest.fixture(scope="session")
def small():
    return simulated(500, 1)


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance check; printed at the end of the run."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = (label, bool(ok), detail)
        _ACCEPTANCE.append(line)
        print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
