import numpy as np
import pytest

from emmixformer.numerics import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def probe_loss(out: Tensor, seed: int = 99) -> Tensor:
    """Scalar loss ``sum(out * w)`` with fixed random weights ``w``.

    Random weights avoid the symmetric cancellations a plain sum can hide
    (e.g. the gradient of sum(softmax) is identically zero).
    """
    w = np.random.default_rng(seed).standard_normal(out.shape)
    return (out * Tensor(w)).sum()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
