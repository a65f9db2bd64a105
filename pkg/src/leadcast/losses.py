"""Loss geometry: Bregman divergences and strictly proper scoring rules.

Bregman losses compare real outcomes and predictions through a convex
potential; scoring rules compare binary outcomes and probability forecasts.
The bridge used throughout: the exposure Exp(mu) = loss(1, mu) - loss(0, mu)
of a strictly proper rule plays the role the potential's derivative plays
for Bregman losses, and for log loss Exp equals minus the derivative of
negative entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EPS_CLAMP = 2.0 ** -52  # probabilities are clamped into [2^-52, 1 - 2^-52]


class LossError(Exception):
    pass


# ============================================================
# Bregman losses
# ============================================================


@dataclass(frozen=True)
class BregmanLoss:
    """Convex potential psi with derivative psi_prime on a closed domain.

    psi_prime_sup bounds |psi_prime| on the domain; psi_prime_inverse, when
    given, inverts psi_prime (used for benchmark links and fast root paths).
    """

    name: str
    psi: Callable[[float], float]
    psi_prime: Callable[[float], float]
    domain: tuple  # (lo, hi) closed
    psi_prime_sup: float
    psi_prime_inverse: Optional[Callable[[float], float]] = None
    # True when psi extends to all reals (e.g. y^2): the divergence stays
    # well-defined outside the domain, which then only scopes the sup/diam
    # constants.  False losses (entropy) reject out-of-domain arguments.
    globally_defined: bool = False

    def domain_lo(self) -> float:
        return self.domain[0]

    def domain_hi(self) -> float:
        return self.domain[1]

    def diameter(self) -> float:
        return self.domain[1] - self.domain[0]

    def check_domain(self, v, what: str = "value") -> None:
        if self.globally_defined:
            return
        v = np.asarray(v)
        lo, hi = self.domain
        if np.any(v < lo - 1e-12) or np.any(v > hi + 1e-12):
            raise LossError(f"{what} outside loss domain [{lo}, {hi}]")


def bregman_div(loss: BregmanLoss, y, z):
    """d(y, z) = psi(y) - psi(z) - psi'(z) (y - z); accepts arrays."""
    loss.check_domain(y, "outcome")
    loss.check_domain(z, "prediction")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    out = loss.psi(y) - loss.psi(z) - loss.psi_prime(z) * (y - z)
    return float(out) if out.ndim == 0 else out


def law_of_cosines_residual(loss: BregmanLoss, y: float, mu: float, phi: float) -> float:
    """Residual of d(y,phi) = d(mu,phi) + d(y,mu) - (psi'(phi)-psi'(mu))(y-mu)."""
    lhs = bregman_div(loss, y, phi)
    rhs = (
        bregman_div(loss, mu, phi)
        + bregman_div(loss, y, mu)
        - (loss.psi_prime(phi) - loss.psi_prime(mu)) * (y - mu)
    )
    return lhs - rhs


def quadratic_loss(Y: float) -> BregmanLoss:
    """psi(y) = y^2 on [-Y, Y]; the divergence is the squared difference."""
    if Y <= 0:
        raise LossError("Y must be positive")
    return BregmanLoss(
        name="quadratic",
        psi=lambda v: np.square(v),
        psi_prime=lambda v: 2.0 * np.asarray(v, dtype=float),
        domain=(-float(Y), float(Y)),
        psi_prime_sup=2.0 * float(Y),
        psi_prime_inverse=lambda t: 0.5 * t,
        globally_defined=True,
    )


def negative_entropy_loss(eps: float) -> BregmanLoss:
    """psi(y) = y ln y + (1-y) ln(1-y) on [eps, 1-eps]; divergence is KL."""
    if not 0.0 < eps < 0.5:
        raise LossError("eps must lie in (0, 1/2)")

    def psi(v):
        v = np.asarray(v, dtype=float)
        return v * np.log(v) + (1.0 - v) * np.log(1.0 - v)

    def psi_prime(v):
        v = np.asarray(v, dtype=float)
        return np.log(v / (1.0 - v))

    def psi_prime_inverse(t):
        t = np.asarray(t, dtype=float)
        # stable logistic; each branch only sees exponents <= 0
        pos = 1.0 / (1.0 + np.exp(-np.maximum(t, 0.0)))
        ez = np.exp(np.minimum(t, 0.0))
        return np.where(t >= 0, pos, ez / (1.0 + ez))

    return BregmanLoss(
        name="negative_entropy",
        psi=psi,
        psi_prime=psi_prime,
        domain=(float(eps), 1.0 - float(eps)),
        psi_prime_sup=math.log((1.0 - eps) / eps),
        psi_prime_inverse=psi_prime_inverse,
    )


def validate_bregman(loss: BregmanLoss, grid: int = 2048) -> None:
    """Grid check: divergence positive off the diagonal, zero on it."""
    lo, hi = loss.domain
    pts = np.linspace(lo, hi, grid)
    dz = bregman_div(loss, pts, pts)
    if np.max(np.abs(dz)) > 1e-12 * max(1.0, np.max(np.abs(loss.psi(pts)))):
        raise LossError("bregman divergence not zero on the diagonal")
    # sample off-diagonal pairs rather than the full grid square
    sub = pts[:: max(1, grid // 128)]
    yy, zz = np.meshgrid(sub, sub)
    mask = np.abs(yy - zz) > (hi - lo) / grid
    d = bregman_div(loss, yy[mask], zz[mask])
    if np.any(d <= 0):
        raise LossError("bregman divergence not positive off the diagonal")


# ============================================================
# Scoring rules
# ============================================================


@dataclass
class ScoringRule:
    """Binary scoring rule given by the two outcome sections of the loss.

    prediction_space is (lo, hi, open_ends); exposure_inverse, when given,
    inverts Exp(mu) = loss_given_one(mu) - loss_given_zero(mu).
    """

    name: str
    loss_given_one: Callable
    loss_given_zero: Callable
    prediction_space: tuple  # (lo, hi, open_ends: bool)
    exposure_inverse: Optional[Callable] = None
    clamp_count: int = field(default=0, compare=False)

    def space_lo(self) -> float:
        return self.prediction_space[0]

    def space_hi(self) -> float:
        return self.prediction_space[1]

    def open_ended(self) -> bool:
        return bool(self.prediction_space[2])


def extend(rule: ScoringRule, p, mu):
    """Expected loss p * loss(1, mu) + (1-p) * loss(0, mu)."""
    p = np.asarray(p, dtype=float)
    out = p * rule.loss_given_one(mu) + (1.0 - p) * rule.loss_given_zero(mu)
    return float(out) if np.ndim(out) == 0 else out


def exposure(rule: ScoringRule, mu):
    out = np.asarray(rule.loss_given_one(mu)) - np.asarray(rule.loss_given_zero(mu))
    return float(out) if out.ndim == 0 else out


def rule_divergence(rule: ScoringRule, mu, phi):
    """d(mu, phi) = extended loss of phi under truth mu, minus its minimum."""
    out = np.asarray(extend(rule, mu, phi)) - np.asarray(extend(rule, mu, mu))
    return float(out) if out.ndim == 0 else out


def decompose_ab(rule: ScoringRule, mu: float, phi: float) -> tuple:
    """(a, b) with loss(y, phi) = a + loss(y, mu) + b (y - mu) for y in {0,1}."""
    a = rule_divergence(rule, mu, phi)
    b = exposure(rule, phi) - exposure(rule, mu)
    return float(a), float(b)


def exposure_sup(rule: ScoringRule, lo: float, hi: float) -> float:
    """sup |Exp| over [lo, hi]; Exp is strictly decreasing for strictly
    proper rules, so the sup sits at an endpoint."""
    return max(abs(exposure(rule, lo)), abs(exposure(rule, hi)))


def brier() -> ScoringRule:
    """Brier (squared) score on [0, 1]; Exp(mu) = 1 - 2 mu."""
    return ScoringRule(
        name="brier",
        loss_given_one=lambda mu: np.square(1.0 - np.asarray(mu, dtype=float)),
        loss_given_zero=lambda mu: np.square(np.asarray(mu, dtype=float)),
        prediction_space=(0.0, 1.0, False),
        exposure_inverse=lambda t: 0.5 * (1.0 - np.asarray(t, dtype=float)),
    )


def log_loss() -> ScoringRule:
    """Log loss on the open unit interval; Exp(mu) = ln((1-mu)/mu).

    Evaluation exactly at 0 or 1 returns the honest infinite loss where the
    limit is infinite; values strictly inside but closer to an endpoint than
    2^-52 are clamped to the 2^-52 margin and counted on clamp_count.
    """

    rule_box = {}

    def _clamped(mu):
        mu = np.asarray(mu, dtype=float)
        inner = np.clip(mu, EPS_CLAMP, 1.0 - EPS_CLAMP)
        exact_end = (mu == 0.0) | (mu == 1.0)
        clamped = (~exact_end) & (inner != mu)
        if np.any(clamped):
            rule_box["rule"].clamp_count += int(np.count_nonzero(clamped))
        return mu, inner, exact_end

    def loss_given_one(mu):
        mu, inner, exact_end = _clamped(mu)
        out = -np.log(inner)
        out = np.where(mu == 0.0, np.inf, out)
        out = np.where(mu == 1.0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def loss_given_zero(mu):
        mu, inner, exact_end = _clamped(mu)
        out = -np.log1p(-inner)
        out = np.where(mu == 1.0, np.inf, out)
        out = np.where(mu == 0.0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def exposure_inverse(t):
        t = np.asarray(t, dtype=float)
        # Exp(mu) = ln((1-mu)/mu) = t  =>  mu = 1/(1+e^t); each exp sees <= 0
        em = np.exp(-np.maximum(t, 0.0))
        pos = em / (1.0 + em)
        return np.where(t >= 0, pos, 1.0 / (1.0 + np.exp(np.minimum(t, 0.0))))

    rule = ScoringRule(
        name="log",
        loss_given_one=loss_given_one,
        loss_given_zero=loss_given_zero,
        prediction_space=(0.0, 1.0, True),
        exposure_inverse=exposure_inverse,
    )
    rule_box["rule"] = rule
    return rule


def validate_scoring(rule: ScoringRule, grid: int = 2048, margin: float = 1e-4) -> None:
    """Grid check of strict propriety: extend(p, p) < extend(p, mu) off the
    diagonal.  The grid stays `margin` inside open prediction spaces."""
    lo, hi, open_ends = rule.prediction_space
    if open_ends:
        lo, hi = lo + margin, hi - margin
    pts = np.linspace(lo, hi, grid)
    sub = pts[:: max(1, grid // 128)]
    pp, mm = np.meshgrid(sub, sub)
    mask = np.abs(pp - mm) > (hi - lo) / grid
    gap = extend(rule, pp[mask], mm[mask]) - extend(rule, pp[mask], pp[mask])
    if np.any(gap <= 0):
        raise LossError(f"scoring rule {rule.name} is not strictly proper on the grid")


# ============================================================
# The weighted-logit supremum used by the log-loss leader's budget
# ============================================================

LOGIT_WEIGHT_BOUND = 1.8  # padded bound on sup 4 p (1-p) ln^2(p/(1-p)) ~= 1.76


def logit_weight_grid_max(grid: int = 2048) -> float:
    """Grid maximum of 4 p (1-p) ln^2(p/(1-p)) over (0, 1)."""
    p = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    vals = 4.0 * p * (1.0 - p) * np.square(np.log(p / (1.0 - p)))
    return float(np.max(vals))
