import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE_REPORT = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_REPORT):
        ok, detail = ACCEPTANCE_REPORT[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def brute_vertices(A, b, tol=1e-9):
    """Independent vertex oracle: solve every square subsystem and keep feasible points."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = A.shape[1]
    out = []
    for idx in itertools.combinations(range(A.shape[0]), n):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, b[list(idx)])
        if np.all(A @ v <= b + tol):
            out.append(v)
    return np.array(out).reshape(-1, n)


def random_polytope(rng, m, p):
    """Box ``[lo, hi]`` plus ``p - 2m`` random unit facets through interior offsets."""
    lo = rng.uniform(0.0, 0.5, m)
    hi = lo + rng.uniform(0.2, 1.0, m)
    A = [np.eye(m), -np.eye(m)]
    b = [hi, -lo]
    center = 0.5 * (lo + hi)
    for _ in range(p - 2 * m):
        d = rng.normal(size=m)
        d /= np.linalg.norm(d)
        # cut somewhere between the centre and the farthest box corner
        far = np.sum(np.maximum(d * hi, d * lo))
        b.append([d @ center + rng.uniform(0.3, 1.0) * (far - d @ center)])
        A.append(d[None, :])
    return np.vstack(A), np.concatenate([np.ravel(x) for x in b])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
