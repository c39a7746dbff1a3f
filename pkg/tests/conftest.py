import pytest

from njm import backend


@pytest.fixture(scope="session", autouse=True)
def _warm_backend():
    # pay any JIT compilation before tests so timed sections stay honest
    backend.warmup()


@pytest.fixture
def numpy_backend():
    """Force the numpy kernels for one test, restoring the previous choice."""
    prev = backend.active_name()
    backend.use("numpy")
    yield
    backend.use(prev)
