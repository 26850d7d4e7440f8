import numpy as np
import pytest

from luba import _backend, analysis, dynamics, equilibrium, simulator

_USERS = (equilibrium, dynamics, simulator, analysis)

BACKENDS = ["python"] + (["cython"] if _backend.compiled is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel implementation."""
    mod = _backend.python if request.param == "python" else _backend.compiled
    for m in _USERS:
        if hasattr(m, "kernels"):
            monkeypatch.setattr(m, "kernels", mod)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
