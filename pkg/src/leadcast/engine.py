"""Defensive forecasting engine.

The engine tracks the squared RKHS norm of the running residual-weighted
feature sum V_N = sum_n (y_n - mu_n) Phi(mu_n, s_n), where the combined
feature map Phi(mu, s) = (psi(mu), k_s) couples a scalar forecast component
psi with a situation kernel k.  Each round it chooses mu so the potential's
increment stays within an explicit per-round budget:

  * the plain rule zeroes the crossing function
        f(mu) = psi(mu) * A + B,
    A = sum r_i psi(mu_i), B = sum r_i k(s_i, s_n), giving increments
    bounded by r^2 * Kdiag;
  * the budget-shifted rule zeroes
        h(mu) = f(mu) - (mu - anchor) * Kdiag(mu, s_n),
    anchor = outcome-hull midpoint, equalizing the worst-case increment at
    both outcome extremes, giving increments bounded by
    (hullHi - mu)(mu - hullLo) * Kdiag.

All slack against these budgets is accounted explicitly per round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import SituationKernel, gram
from .protocol import Situation

GRID_POINTS = 1025       # sign-change scan resolution
ROOT_TOL = 1e-12         # bisection stops when the bracket is this narrow
OPEN_DELTA0 = 1e-9       # open intervals: first search margin away from the ends
OPEN_DELTA_FACTOR = 1e-3 # geometric widening factor when no sign change is found
OPEN_DELTA_MIN = 1e-250  # widening floor; far beyond any reachable root

K29 = "k29"
K29_STAR = "k29star"


class EngineError(Exception):
    pass


@dataclass(frozen=True)
class ForecastFeatureMap:
    """Scalar forecast component psi plus a situation kernel.

    psi must accept numpy arrays.  psi_sup_bound bounds |psi| on the
    prediction interval (math.inf is allowed: the log-loss component is
    unnormalized).  psi_inverse, when given, inverts psi and enables the
    closed-form fast path of the plain rule.
    """

    psi: Callable
    kernel: SituationKernel
    psi_sup_bound: float
    psi_inverse: Optional[Callable] = None

    def kdiag(self, mu: float, kappa: float) -> float:
        """Diagonal of the combined kernel: psi(mu)^2 + k(s, s)."""
        return float(self.psi(mu)) ** 2 + kappa

    def c_phi_sq_bound(self) -> float:
        return self.psi_sup_bound ** 2 + self.kernel.embedding_constant_bound ** 2


class _Buffer:
    """Amortized-growth numpy buffer (rows for 2-d, scalars for 1-d)."""

    def __init__(self):
        self._arr: Optional[np.ndarray] = None
        self._n = 0

    def append(self, value) -> None:
        value = np.asarray(value, dtype=float)
        if self._arr is None:
            shape = (16,) + value.shape
            self._arr = np.zeros(shape)
        if self._n == self._arr.shape[0]:
            bigger = np.zeros((2 * self._arr.shape[0],) + self._arr.shape[1:])
            bigger[: self._n] = self._arr
            self._arr = bigger
        self._arr[self._n] = value
        self._n += 1

    def view(self) -> np.ndarray:
        if self._arr is None:
            return np.zeros((0,))
        return self._arr[: self._n]


@dataclass
class EngineState:
    """Numeric history of one defensive forecasting run."""

    rule: str
    features: _Buffer = field(default_factory=_Buffer)
    residuals: _Buffer = field(default_factory=_Buffer)
    mus: list = field(default_factory=list)
    psi_values: _Buffer = field(default_factory=_Buffer)
    A: float = 0.0
    potential_sq: float = 0.0
    cum_budget: float = 0.0
    cum_slack: float = 0.0
    diagnostics: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.mus)


@dataclass
class RoundDecision:
    """Everything decided before the outcome arrives."""

    mu: float
    psi_mu: float
    f_mu: float
    kdiag: float
    kappa: float
    A: float
    B: float
    root_residual: float
    method: str  # "root" | "fastpath" | "flat" | "endpoint-hi" | "endpoint-lo"
    feature: np.ndarray
    budget: Optional[float]  # None for the plain rule (budget is r^2 Kdiag)


# ============================================================
# Crossing function
# ============================================================


def crossing_coefficients(
    fmap: ForecastFeatureMap, state: EngineState, situation: Situation
) -> tuple:
    """(A, B, feature, kappa) for the current round; O(n) kernel work."""
    feature = fmap.kernel.feature(situation)
    kappa = float(fmap.kernel.pair(feature, feature))
    if state.n == 0:
        return state.A, 0.0, feature, kappa
    col = fmap.kernel.column(state.features.view(), feature)
    b = float(state.residuals.view() @ col)
    return state.A, b, feature, kappa


def crossing_function(
    fmap: ForecastFeatureMap, state: EngineState, situation: Situation
) -> Callable:
    """The map mu -> psi(mu) * A + B; empty history gives the zero function."""
    a, b, _, _ = crossing_coefficients(fmap, state, situation)

    def f(mu):
        return fmap.psi(mu) * a + b

    return f


# ============================================================
# Root finding: grid scan + bisection, ties broken toward a tie point
# ============================================================


def _grid_bisect(h: Callable, lo: float, hi: float, tie: float,
                 grid_points: int = GRID_POINTS, tol: float = ROOT_TOL) -> tuple:
    """Root of continuous h on [lo, hi].

    Returns (root, status): status "root" on success, "flat" when h vanishes
    on the whole grid (any point is a root; the tie point is returned), or
    "allpos"/"allneg" when the grid shows no sign change (root is None).
    Among several sign changes the bracket nearest the tie point wins.
    """
    xs = np.linspace(lo, hi, grid_points)
    vals = np.asarray(h(xs), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise EngineError("crossing function not finite on the search grid")
    if np.all(vals == 0.0):
        return min(max(tie, lo), hi), "flat"

    candidates = []  # (distance to tie, kind, payload)
    for i in np.flatnonzero(vals == 0.0):
        candidates.append((abs(xs[i] - tie), "exact", float(xs[i])))
    signs = np.sign(vals)
    for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
        mid = 0.5 * (xs[i] + xs[i + 1])
        candidates.append((abs(mid - tie), "bracket", i))
    if not candidates:
        return None, ("allpos" if vals[0] > 0 else "allneg")

    candidates.sort(key=lambda c: c[0])
    _, kind, payload = candidates[0]
    if kind == "exact":
        return payload, "root"
    i = payload
    a, b = float(xs[i]), float(xs[i + 1])
    fa = float(vals[i])
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = float(h(m))
        if fm == 0.0:
            return m, "root"
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b), "root"


# ============================================================
# Round rules
# ============================================================


def k29_round(
    fmap: ForecastFeatureMap,
    state: EngineState,
    situation: Situation,
    interval: tuple,
) -> RoundDecision:
    """Plain rule: zero of f(mu) = psi(mu) A + B on the closed interval.

    No sign change: f > 0 throughout returns the upper endpoint, f < 0 the
    lower one (the residual's sign then keeps the increment within budget).
    Empty history gives f == 0 and the tie-break returns the midpoint.
    """
    lo, hi = float(interval[0]), float(interval[1])
    a, b, feature, kappa = crossing_coefficients(fmap, state, situation)

    def f(mu):
        return fmap.psi(mu) * a + b

    mid = 0.5 * (lo + hi)
    mu = None
    method = "root"
    if fmap.psi_inverse is not None and a != 0.0:
        cand = float(fmap.psi_inverse(-b / a))
        if math.isfinite(cand) and lo <= cand <= hi and abs(float(f(cand))) <= 1e-9 * (
            1.0 + abs(a) + abs(b)
        ):
            mu, method = cand, "fastpath"
    if mu is None:
        root, status = _grid_bisect(f, lo, hi, tie=mid)
        if status == "flat":
            mu, method = root, "flat"
        elif status == "root":
            mu, method = root, "root" if method == "root" else method
        elif status == "allpos":
            mu, method = hi, "endpoint-hi"
        else:
            mu, method = lo, "endpoint-lo"

    psi_mu = float(fmap.psi(mu))
    f_mu = psi_mu * a + b
    return RoundDecision(
        mu=float(mu),
        psi_mu=psi_mu,
        f_mu=f_mu,
        kdiag=psi_mu ** 2 + kappa,
        kappa=kappa,
        A=a,
        B=b,
        root_residual=f_mu,
        method=method,
        feature=feature,
        budget=None,
    )


def k29star_round(
    fmap: ForecastFeatureMap,
    state: EngineState,
    situation: Situation,
    interval: tuple,          # (lo, hi, open_ends)
    hull: tuple,              # outcome hull (lo, hi); anchor is its midpoint
) -> RoundDecision:
    """Budget-shifted rule: zero of h(mu) = f(mu) - (mu - anchor) Kdiag(mu).

    Closed intervals use the endpoint rule when h has no sign change (h > 0
    throughout returns the upper endpoint, h < 0 the lower).  Open intervals
    are searched on [lo + delta*width, hi - delta*width] starting from
    delta = 1e-9 and widening geometrically until a sign change appears;
    the unnormalized log-loss component makes h -> +/- inf toward the ends,
    so the widening terminates and predictions never touch the ends.
    """
    lo, hi = float(interval[0]), float(interval[1])
    open_ends = bool(interval[2]) if len(interval) > 2 else False
    hull_lo, hull_hi = float(hull[0]), float(hull[1])
    anchor = 0.5 * (hull_lo + hull_hi)
    a, b, feature, kappa = crossing_coefficients(fmap, state, situation)

    def h(mu):
        psi = fmap.psi(mu)
        return psi * a + b - (mu - anchor) * (psi * psi + kappa)

    if open_ends:
        width = hi - lo
        tie = 0.5 * (lo + hi)
        delta = OPEN_DELTA0
        while True:
            # float saturation near the ends: never let the search interval
            # close onto lo or hi themselves
            a_lo = max(lo + delta * width, np.nextafter(lo, hi))
            a_hi = min(hi - delta * width, np.nextafter(hi, lo))
            root, status = _grid_bisect(h, a_lo, a_hi, tie=tie)
            if status == "flat":
                mu, method = root, "flat"
                break
            if status == "root":
                mu, method = root, "root"
                break
            if delta <= OPEN_DELTA_MIN:
                # cannot occur for the log-loss map (h diverges to +inf/-inf
                # at the ends); reaching the floor means the map is broken
                raise EngineError(
                    f"no sign change of h on the open interval down to "
                    f"margin {delta:g} (grid {status})"
                )
            delta = max(delta * OPEN_DELTA_FACTOR, OPEN_DELTA_MIN)
    else:
        tie = min(max(anchor, lo), hi)
        root, status = _grid_bisect(h, lo, hi, tie=tie)
        if status == "flat":
            mu, method = root, "flat"
        elif status == "root":
            mu, method = root, "root"
        elif status == "allpos":
            mu, method = hi, "endpoint-hi"
        else:
            mu, method = lo, "endpoint-lo"

    psi_mu = float(fmap.psi(mu))
    f_mu = psi_mu * a + b
    kdiag = psi_mu ** 2 + kappa
    budget = max(hull_hi - mu, 0.0) * max(mu - hull_lo, 0.0) * kdiag
    return RoundDecision(
        mu=float(mu),
        psi_mu=psi_mu,
        f_mu=f_mu,
        kdiag=kdiag,
        kappa=kappa,
        A=a,
        B=b,
        root_residual=f_mu - (mu - anchor) * kdiag,
        method=method,
        feature=feature,
        budget=budget,
    )


# ============================================================
# Potential update
# ============================================================


def potential_update(state: EngineState, decision: RoundDecision, y: float) -> float:
    """Absorb the outcome: potential += 2 r f(mu) + r^2 Kdiag, A += r psi(mu).

    The recorded budget is r^2 Kdiag for the plain rule and the hull product
    for the shifted rule; slack = max(0, increment - budget) accumulates so
    every certificate downstream is explicit about numerical give.
    """
    r = float(y) - decision.mu
    increment = 2.0 * r * decision.f_mu + r * r * decision.kdiag
    budget = decision.budget if decision.budget is not None else r * r * decision.kdiag
    slack = max(0.0, increment - budget)

    state.A += r * decision.psi_mu
    state.potential_sq += increment
    state.cum_budget += budget
    state.cum_slack += slack
    state.features.append(decision.feature)
    state.residuals.append(r)
    state.psi_values.append(decision.psi_mu)
    state.mus.append(decision.mu)
    state.diagnostics.append(
        {
            "n": state.n,
            "mu": decision.mu,
            "root_residual": decision.root_residual,
            "method": decision.method,
            "increment": increment,
            "budget": budget,
            "potential_sq": state.potential_sq,
            "cum_slack": state.cum_slack,
        }
    )
    return increment


# ============================================================
# Independent potential oracle (full double sum through the Gram matrix)
# ============================================================


def brute_force_potential_sq(
    fmap: ForecastFeatureMap,
    situations: Sequence[Situation],
    mus: Sequence[float],
    ys: Sequence[float],
    prefixes: Optional[Sequence[int]] = None,
):
    """||V_N||^2 = (sum r psi(mu))^2 + r^T G r computed from scratch.

    With `prefixes` given, returns the value at each prefix length.  This is
    the oracle the incremental engine is checked against.
    """
    mus = np.asarray(mus, dtype=float)
    ys = np.asarray(ys, dtype=float)
    r = ys - mus
    psis = fmap.psi(mus)
    g = gram(fmap.kernel, list(situations))
    if prefixes is None:
        return float((r @ psis) ** 2 + r @ g @ r)
    out = []
    for n in prefixes:
        rn = r[:n]
        out.append(float((rn @ psis[:n]) ** 2 + rn @ g[:n, :n] @ rn))
    return np.array(out)
