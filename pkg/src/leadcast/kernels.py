"""Kernels on situations and finite kernel expansions.

A situation kernel is a PSD function k(s, s') of two situations together
with an embedding-constant bound c >= sup_s sqrt(k(s, s)).  Kernels here
work through an internal feature representation so the engine can evaluate
whole history columns with one vectorized call.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .protocol import OutcomeSpace, PredictionStrategy, Situation, window


class KernelError(Exception):
    pass


# ============================================================
# Window extraction
# ============================================================


def window_vector(situation: Situation, k: int, space: OutcomeSpace) -> np.ndarray:
    """Flatten the k-window of a situation into a fixed-length vector.

    Layout: k slots of (x, y), oldest first, then the current x; slots not
    yet observed are padded (x and y alike) with the space's sentinel value,
    which lies strictly outside the outcome space.
    """
    pairs, current = window(situation, k)
    d = len(current)
    pad = space.sentinel()
    out = np.full(k * (d + 1) + d, pad, dtype=float)
    offset = (k - len(pairs)) * (d + 1)
    for x, y in pairs:
        out[offset:offset + d] = x
        out[offset + d] = y
        offset += d + 1
    out[k * (d + 1):] = current
    return out


# ============================================================
# Kernel types
# ============================================================


class SituationKernel:
    """Base class: subclasses define feature(), pair() and column().

    embedding_constant_bound is a certified upper bound on sup sqrt(k(s,s)).
    """

    embedding_constant_bound: float = math.inf

    def feature(self, situation: Situation) -> np.ndarray:
        raise NotImplementedError

    def pair(self, f: np.ndarray, g: np.ndarray) -> float:
        raise NotImplementedError

    def column(self, stacked: np.ndarray, f: np.ndarray) -> np.ndarray:
        """k(s_i, s) for every cached feature row s_i; default loops pair()."""
        return np.array([self.pair(row, f) for row in stacked])

    def eval(self, s: Situation, t: Situation) -> float:
        return float(self.pair(self.feature(s), self.feature(t)))

    def diag(self, s: Situation) -> float:
        f = self.feature(s)
        return float(self.pair(f, f))


class RBFWindowKernel(SituationKernel):
    """exp(-gamma * ||w(s) - w(s')||^2) on flattened k-windows; k(s,s) = 1."""

    def __init__(self, k: int, gamma: float, space: OutcomeSpace):
        if gamma <= 0:
            raise KernelError("gamma must be positive")
        self.k = int(k)
        self.gamma = float(gamma)
        self.space = space
        self.embedding_constant_bound = 1.0

    def feature(self, situation: Situation) -> np.ndarray:
        return window_vector(situation, self.k, self.space)

    def pair(self, f: np.ndarray, g: np.ndarray) -> float:
        d = f - g
        return float(np.exp(-self.gamma * float(d @ d)))

    def column(self, stacked: np.ndarray, f: np.ndarray) -> np.ndarray:
        diff = stacked - f
        return np.exp(-self.gamma * np.einsum("ij,ij->i", diff, diff))


class LinearWindowKernel(SituationKernel):
    """<w(s), w(s')> on flattened k-windows.

    The embedding bound must be supplied by the caller: window coordinates
    are bounded by the outcome space, the side-information range and the
    sentinel, so sqrt(dim) * max coordinate magnitude is a valid choice.
    """

    def __init__(self, k: int, space: OutcomeSpace, bound: float):
        self.k = int(k)
        self.space = space
        self.embedding_constant_bound = float(bound)

    def feature(self, situation: Situation) -> np.ndarray:
        return window_vector(situation, self.k, self.space)

    def pair(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(f @ g)

    def column(self, stacked: np.ndarray, f: np.ndarray) -> np.ndarray:
        return stacked @ f


class TruncatedUniversalKernel(SituationKernel):
    """Weighted sum of rank-one kernels built from a strategy list.

    Member n (1-based) with sup norm ||F_n||_C contributes
    4^-n * F_n(s) F_n(s') / ||F_n||_C^2; a None entry is an identically-zero
    member that keeps its slot (and its weight) but contributes nothing.
    The declared embedding bound is sqrt(sum_{n=1..m} 4^-n), which tends to
    1/sqrt(3) as the truncation level m grows.
    """

    def __init__(self, members: Sequence):
        self.members = []
        for slot, entry in enumerate(members, start=1):
            if entry is None:
                self.members.append(None)
                continue
            strategy, sup_norm = entry
            if not sup_norm > 0:
                raise KernelError(f"member {slot}: sup norm must be positive, got {sup_norm}")
            self.members.append((strategy, float(sup_norm)))
        self.m = len(self.members)
        self.embedding_constant_bound = math.sqrt(
            sum(4.0 ** -n for n in range(1, self.m + 1))
        )

    def feature(self, situation: Situation) -> np.ndarray:
        out = np.zeros(self.m)
        for slot, entry in enumerate(self.members, start=1):
            if entry is None:
                continue
            strategy, sup_norm = entry
            out[slot - 1] = 2.0 ** -slot * strategy.predict(situation) / sup_norm
        return out

    def pair(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(f @ g)

    def column(self, stacked: np.ndarray, f: np.ndarray) -> np.ndarray:
        return stacked @ f

    def member_contribution(self, slot: int, s: Situation, t: Situation) -> float:
        """Exact contribution of one member to eval(s, t)."""
        entry = self.members[slot - 1]
        if entry is None:
            return 0.0
        strategy, sup_norm = entry
        return 4.0 ** -slot * strategy.predict(s) * strategy.predict(t) / sup_norm ** 2

    def member_norm_bound(self, slot: int) -> float:
        """Upper bound on the RKHS norm of member `slot` as a function."""
        entry = self.members[slot - 1]
        if entry is None:
            return 0.0
        return 2.0 ** slot * entry[1]


def rbf_window_kernel(k: int, gamma: float, space: OutcomeSpace) -> RBFWindowKernel:
    return RBFWindowKernel(k, gamma, space)


def linear_window_kernel(k: int, space: OutcomeSpace, bound: float) -> LinearWindowKernel:
    return LinearWindowKernel(k, space, bound)


def truncated_universal_kernel(members: Sequence) -> TruncatedUniversalKernel:
    return TruncatedUniversalKernel(members)


# ============================================================
# Gram matrices and expansions
# ============================================================


def gram(kernel: SituationKernel, situations: Sequence[Situation]) -> np.ndarray:
    """Pairwise kernel matrix; exactly symmetric by construction."""
    feats = [kernel.feature(s) for s in situations]
    n = len(feats)
    if n == 0:
        return np.zeros((0, 0))
    stacked = np.vstack(feats)
    g = np.empty((n, n))
    for i in range(n):
        g[i, :] = kernel.column(stacked, stacked[i])
    return 0.5 * (g + g.T)


class KernelExpansion(PredictionStrategy):
    """Finite expansion sum_j coeffs[j] * k(centers[j], .)."""

    def __init__(self, kernel: SituationKernel, centers: Sequence[Situation], coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if len(centers) != len(coeffs):
            raise KernelError("centers and coeffs must have equal length")
        self.kernel = kernel
        self.centers = list(centers)
        self.coeffs = coeffs
        self._center_feats = (
            np.vstack([kernel.feature(c) for c in centers]) if centers else np.zeros((0, 1))
        )

    def eval(self, situation: Situation) -> float:
        if not self.centers:
            return 0.0
        col = self.kernel.column(self._center_feats, self.kernel.feature(situation))
        return float(self.coeffs @ col)

    def predict(self, situation: Situation) -> float:
        return self.eval(situation)

    def gram_matrix(self) -> np.ndarray:
        return gram(self.kernel, self.centers)


def expansion_eval(expansion: KernelExpansion, situation: Situation) -> float:
    return expansion.eval(situation)


def expansion_norm(expansion: KernelExpansion) -> float:
    """RKHS norm sqrt(c^T G c); tiny negative quadratic forms clamp to 0,
    clearly negative ones mean the kernel is not PSD and raise."""
    if not expansion.centers:
        return 0.0
    g = expansion.gram_matrix()
    c = expansion.coeffs
    q = float(c @ g @ c)
    scale = float(np.abs(c) @ np.abs(g) @ np.abs(c))
    if q < -1e-6 * max(scale, 1e-30):
        raise KernelError(f"kernel is not PSD: quadratic form {q} at scale {scale}")
    return math.sqrt(max(q, 0.0))


def scaled_to_norm(expansion: KernelExpansion, target: float) -> KernelExpansion:
    """Rescale coefficients so the expansion's RKHS norm equals target."""
    current = expansion_norm(expansion)
    if current == 0.0:
        if target == 0.0:
            return expansion
        raise KernelError("cannot scale a zero expansion to a nonzero norm")
    return KernelExpansion(
        expansion.kernel, expansion.centers, expansion.coeffs * (target / current)
    )


def embedding_constant_estimate(
    kernel: SituationKernel, situations: Sequence[Situation]
) -> float:
    """Max sampled sqrt(k(s, s)); a lower bound on the true constant and
    never above a correct declared bound."""
    best = 0.0
    for s in situations:
        best = max(best, math.sqrt(max(kernel.diag(s), 0.0)))
    return best
