from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_feasible_qp(rng, n=None, m=None, box=True):
    """Strictly convex QP (eigenvalues in [0.5, 10]) with up to 20 general rows
    plus an optional box, all containing a known interior point."""
    from robust_mrta.solver import QpInstance

    n = n or int(rng.integers(2, 13))
    m = int(rng.integers(1, 21)) if m is None else m
    basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
    hess = basis @ np.diag(rng.uniform(0.5, 10.0, size=n)) @ basis.T
    hess = 0.5 * (hess + hess.T)
    lin = rng.normal(size=n)
    x0 = rng.uniform(-1, 1, size=n)
    rows = rng.normal(size=(m, n))
    rhs = rows @ x0 - rng.uniform(0.0, 1.0, size=m)
    lower = upper = None
    if box:
        lower = x0 - rng.uniform(0.1, 2.0, size=n)
        upper = x0 + rng.uniform(0.1, 2.0, size=n)
    return QpInstance(hess, lin, rows, rhs, lower=lower, upper=upper)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
