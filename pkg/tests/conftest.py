import numpy as np
import pytest


def random_pd(rng, n, cond=10.0):
    """Random complex Hermitian positive definite matrix."""
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(A)
    w = np.geomspace(1.0, cond, n)
    return (Q * w) @ Q.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: ``(criterion, passed, detail)`` lines collected by the acceptance suite.
ACCEPTANCE_REPORT = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in sorted(ACCEPTANCE_REPORT, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {detail}")
