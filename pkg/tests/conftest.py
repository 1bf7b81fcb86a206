import numpy as np
import pytest

from ksymloop import _kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["numpy", "numba"])
def backend(request, monkeypatch):
    """Run a test once per kernel path; the numba leg is skipped when numba is missing."""
    if request.param == "numba":
        if _kernels.numba_impl is None:
            pytest.skip("numba not installed")
        monkeypatch.setenv("KSYMLOOP_DISABLE_NUMBA", "0")
    else:
        monkeypatch.setenv("KSYMLOOP_DISABLE_NUMBA", "1")
    return request.param


def random_matrix(rng, n, m=None, scale=1.0):
    m = n if m is None else m
    return scale * (rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m)))


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
