import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from enscontrol.model import LinearEnsembleSystem  # noqa: E402


def constant_system(A, B, label="constant"):
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n, m = B.shape
    return LinearEnsembleSystem(n=n, m=m, d=1, eval_A=lambda t, b: A, eval_B=lambda t, b: B, label=label)


@pytest.fixture
def zero_dynamics():
    def make(n=2, m=2):
        return constant_system(np.zeros((n, n)), np.eye(n, m))
    return make


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
