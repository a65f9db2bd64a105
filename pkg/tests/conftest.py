import numpy as np
import pytest

from leadcast.kernels import SituationKernel
from leadcast.protocol import Situation


class ConstKernel(SituationKernel):
    """k(s, s') == 1 for all situations; embedding constant exactly 1."""

    embedding_constant_bound = 1.0

    def feature(self, situation):
        return np.array([1.0])

    def pair(self, f, g):
        return float(f @ g)

    def column(self, stacked, f):
        return stacked @ f


class IndefiniteKernel(SituationKernel):
    """Deliberately non-PSD 'kernel' for error-path tests: zero diagonal,
    -1 off the diagonal (keyed by the current vector)."""

    embedding_constant_bound = 1.0

    def feature(self, situation):
        return np.asarray(situation.current, dtype=float)

    def pair(self, f, g):
        return 0.0 if np.array_equal(f, g) else -1.0

    def column(self, stacked, f):
        return np.array([self.pair(row, f) for row in stacked])


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


def make_sit(current, history=()):
    hist = tuple((np.asarray(x, dtype=float), float(y)) for x, y in history)
    return Situation(hist, np.asarray(current, dtype=float))


@pytest.fixture
def sit_factory():
    return make_sit
