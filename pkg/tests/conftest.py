import numpy as np
import pytest


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hpd(rng, n, cond=None):
    A = cn(rng, n, n)
    if cond is None:
        return A.conj().T @ A + n * np.eye(n)
    U, _ = np.linalg.qr(A)
    w = np.geomspace(1.0, cond, n)
    return (U * w) @ U.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one acceptance line, then assert it."""

    def _record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" [{detail}]" if detail else "")
        _VERDICTS.append((number, line))
        print(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
