import numpy as np
import pytest

from vsrtradeoff import kernels

BACKENDS = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=BACKENDS)
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
