import numpy as np
import pytest

from dnurbs.core import kernels


@pytest.fixture(autouse=True)
def _restore_kernels():
    """CLI calls change the process-wide backend and thread count."""
    impl, threads = kernels.backend(), kernels.get_num_threads()
    yield
    kernels.set_backend(impl)
    kernels.set_num_threads(threads)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def cox_de_boor(i, p, u, U):
    """Textbook recursive basis N_{i,p}(u); half-open spans, last span closed at u = 1."""
    if p == 0:
        if U[i] <= u < U[i + 1]:
            return 1.0
        # clamped right end: the last nonempty span owns u = 1
        if u == U[-1] and U[i] < U[i + 1] == U[-1]:
            return 1.0
        return 0.0
    a = 0.0 if U[i + p] == U[i] else (u - U[i]) / (U[i + p] - U[i]) * cox_de_boor(i, p - 1, u, U)
    b = 0.0
    if U[i + p + 1] != U[i + 1]:
        b = (U[i + p + 1] - u) / (U[i + p + 1] - U[i + 1]) * cox_de_boor(i + 1, p - 1, u, U)
    return a + b


def naive_surface_point(P, W, Ku, Kv, u, v):
    """Direct double-sum evaluation of a NURBS surface (no spans, no tape)."""
    n, m = W.shape
    num = np.zeros(P.shape[2])
    den = 0.0
    for i in range(n):
        Nu = cox_de_boor(i, Ku.degree, u, Ku.knots)
        if Nu == 0.0:
            continue
        for j in range(m):
            Nv = cox_de_boor(j, Kv.degree, v, Kv.knots)
            num += Nu * Nv * W[i, j] * P[i, j]
            den += Nu * Nv * W[i, j]
    return num / den


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance lines at the end of the run, whatever the capture mode."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
