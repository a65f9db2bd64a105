"""Leading strategies built on the defensive forecasting engine.

Four families, each a concrete choice of forecast component psi, round rule
and prediction interval:

  quadratic  psi(mu) = mu / Y, shifted rule on [-Y, Y]
  bregman    psi(mu) = psi'(mu) / sup|psi'|, plain rule on the loss domain
  scoring    psi(mu) = Exp(mu) / sup|Exp|, shifted rule, binary outcomes,
             predictions in a closed subinterval of [0, 1]
  logloss    psi(mu) = Exp(mu) = ln((1-mu)/mu) unnormalized, shifted rule,
             binary outcomes, open-interval predictions

A leader is an ordinary deterministic strategy: its prediction is a pure
function of the situation (its own past predictions are re-derivable from
the history), with an incremental state so a protocol-ordered run costs
O(n) kernel work per round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import engine
from .engine import EngineState, ForecastFeatureMap, k29_round, k29star_round, potential_update
from .kernels import KernelExpansion, SituationKernel, expansion_norm
from .losses import (
    BregmanLoss,
    LossError,
    ScoringRule,
    exposure,
    exposure_sup,
    log_loss,
)
from .protocol import OutcomeSpace, PredictionStrategy, Situation, binary_space, interval_space

FAMILY_QUADRATIC = "quadratic"
FAMILY_BREGMAN = "bregman"
FAMILY_SCORING = "scoring"
FAMILY_LOGLOSS = "logloss"


class LeaderError(Exception):
    pass


@dataclass(frozen=True)
class LeaderSpec:
    """Static description of a leader: family, rule and bound constants."""

    family: str
    rule: str  # engine.K29 or engine.K29_STAR
    space: OutcomeSpace
    prediction_interval: tuple  # (lo, hi, open_ends)
    hull: tuple  # outcome hull (lo, hi)
    scale: float  # Y (quadratic), diameter (bregman), 1 otherwise
    aux_norm: float  # Y, sup|psi'|, sup|Exp| or 1 per family
    kernel_bound: float
    declared_prediction_space: str  # "reals" or "interval"; effective range is the interval


class Leader(PredictionStrategy):
    """Defensive forecaster for one family.

    predict() keeps an incremental engine state synchronized with the
    situations it is shown.  Protocol order (each situation extends the last
    by exactly one (x, y) pair) costs O(n) per round; any other history
    triggers a full deterministic rebuild from the situation alone.
    """

    def __init__(
        self,
        spec: LeaderSpec,
        fmap: ForecastFeatureMap,
        loss: Optional[BregmanLoss] = None,
        scoring_rule: Optional[ScoringRule] = None,
        name: Optional[str] = None,
    ):
        self.spec = spec
        self.fmap = fmap
        self.loss = loss
        self.scoring_rule = scoring_rule
        self.name = name or spec.family
        self.state = EngineState(rule=spec.rule)
        self._pending_situation: Optional[Situation] = None
        self._pending_decision = None

    # -- engine plumbing --

    def _decide(self, situation: Situation):
        if self.spec.rule == engine.K29:
            lo, hi, _ = self.spec.prediction_interval
            return k29_round(self.fmap, self.state, situation, (lo, hi))
        return k29star_round(
            self.fmap, self.state, situation, self.spec.prediction_interval, self.spec.hull
        )

    def _absorb(self, y: float) -> None:
        potential_update(self.state, self._pending_decision, y)
        self._pending_situation = None
        self._pending_decision = None

    def _rebuild(self, situation: Situation) -> None:
        self.state = EngineState(rule=self.spec.rule)
        self._pending_situation = None
        self._pending_decision = None
        for i, (x, y) in enumerate(situation.history):
            s_i = Situation(situation.history[:i], x)
            decision = self._decide(s_i)
            potential_update(self.state, decision, y)

    def predict(self, situation: Situation) -> float:
        hist = situation.history
        m = self.state.n
        if self._pending_situation is not None:
            pend = self._pending_situation
            if len(hist) == m and self._matches_pending(situation):
                return self._pending_decision.mu  # re-predict of the same round
            if (
                len(hist) == m + 1
                and len(hist) >= 1
                and np.array_equal(hist[-1][0], pend.current)
            ):
                self._absorb(hist[-1][1])
            else:
                self._rebuild(situation)
        elif len(hist) != m:
            self._rebuild(situation)
        decision = self._decide(situation)
        self._pending_situation = situation
        self._pending_decision = decision
        return decision.mu

    def observe(self, y: float) -> None:
        """Absorb the outcome of the pending round immediately (protocol
        runner hook); without it the outcome is picked up from the next
        round's situation."""
        if self._pending_decision is not None:
            self._absorb(y)

    def _matches_pending(self, situation: Situation) -> bool:
        pend = self._pending_situation
        if not np.array_equal(situation.current, pend.current):
            return False
        if len(situation.history) != len(pend.history):
            return False
        if situation.history and not (
            np.array_equal(situation.history[-1][0], pend.history[-1][0])
            and situation.history[-1][1] == pend.history[-1][1]
        ):
            return False
        return True

    # -- reporting --

    @property
    def potential_sq(self) -> float:
        return self.state.potential_sq

    @property
    def cum_slack(self) -> float:
        return self.state.cum_slack

    @property
    def cum_budget(self) -> float:
        return self.state.cum_budget

    def diagnostics_rows(self) -> list:
        return list(self.state.diagnostics)


# ============================================================
# Family constructors
# ============================================================


def quadratic_leader(Y: float, kernel: SituationKernel) -> Leader:
    """Square-loss leader on [-Y, Y]; round 1 predicts the midpoint 0."""
    if Y <= 0:
        raise LeaderError("Y must be positive")
    Y = float(Y)
    spec = LeaderSpec(
        family=FAMILY_QUADRATIC,
        rule=engine.K29_STAR,
        space=interval_space(-Y, Y),
        prediction_interval=(-Y, Y, False),
        hull=(-Y, Y),
        scale=Y,
        aux_norm=Y,
        kernel_bound=kernel.embedding_constant_bound,
        declared_prediction_space="reals",
    )
    fmap = ForecastFeatureMap(
        psi=lambda mu: np.asarray(mu, dtype=float) / Y,
        kernel=kernel,
        psi_sup_bound=1.0,
        psi_inverse=lambda t: Y * t,
    )
    return Leader(spec, fmap)


def bregman_leader(loss: BregmanLoss, kernel: SituationKernel) -> Leader:
    """Bregman-divergence leader with the plain rule on the loss domain."""
    sup = float(loss.psi_prime_sup)
    if not (sup > 0 and math.isfinite(sup)):
        raise LeaderError("psi_prime_sup must be positive and finite")
    lo, hi = loss.domain
    spec = LeaderSpec(
        family=FAMILY_BREGMAN,
        rule=engine.K29,
        space=interval_space(lo, hi),
        prediction_interval=(lo, hi, False),
        hull=(lo, hi),
        scale=loss.diameter(),
        aux_norm=sup,
        kernel_bound=kernel.embedding_constant_bound,
        declared_prediction_space="interval",
    )
    psi_inverse = None
    if loss.psi_prime_inverse is not None:
        psi_inverse = lambda t: float(loss.psi_prime_inverse(t * sup))
    fmap = ForecastFeatureMap(
        psi=lambda mu: np.asarray(loss.psi_prime(mu), dtype=float) / sup,
        kernel=kernel,
        psi_sup_bound=1.0,
        psi_inverse=psi_inverse,
    )
    return Leader(spec, fmap, loss=loss)


def scoring_leader(
    rule: ScoringRule, kernel: SituationKernel, p_lo: float = 0.05, p_hi: float = 0.95
) -> Leader:
    """Proper-scoring-rule leader, binary outcomes, closed prediction interval."""
    if not (0.0 <= p_lo < p_hi <= 1.0):
        raise LeaderError("need 0 <= p_lo < p_hi <= 1")
    sup = exposure_sup(rule, p_lo, p_hi)
    if not (sup > 0 and math.isfinite(sup)):
        raise LeaderError("exposure sup on the prediction interval must be positive finite")
    spec = LeaderSpec(
        family=FAMILY_SCORING,
        rule=engine.K29_STAR,
        space=binary_space(),
        prediction_interval=(float(p_lo), float(p_hi), False),
        hull=(0.0, 1.0),
        scale=1.0,
        aux_norm=sup,
        kernel_bound=kernel.embedding_constant_bound,
        declared_prediction_space="interval",
    )
    fmap = ForecastFeatureMap(
        psi=lambda mu: np.asarray(exposure(rule, mu), dtype=float) / sup,
        kernel=kernel,
        psi_sup_bound=1.0,
    )
    return Leader(spec, fmap, scoring_rule=rule, name=f"scoring_{rule.name}")


def logloss_leader(kernel: SituationKernel) -> Leader:
    """Log-loss leader with the unnormalized exposure on the open (0, 1)."""
    rule = log_loss()
    spec = LeaderSpec(
        family=FAMILY_LOGLOSS,
        rule=engine.K29_STAR,
        space=binary_space(),
        prediction_interval=(0.0, 1.0, True),
        hull=(0.0, 1.0),
        scale=1.0,
        aux_norm=1.0,
        kernel_bound=kernel.embedding_constant_bound,
        declared_prediction_space="interval",
    )
    fmap = ForecastFeatureMap(
        psi=lambda mu: np.log((1.0 - np.asarray(mu, dtype=float)) / np.asarray(mu, dtype=float)),
        kernel=kernel,
        psi_sup_bound=math.inf,
    )
    return Leader(spec, fmap, scoring_rule=rule)


def make_leader(family: str, kernel: SituationKernel, **kwargs) -> Leader:
    if family == FAMILY_QUADRATIC:
        return quadratic_leader(kwargs["Y"], kernel)
    if family == FAMILY_BREGMAN:
        return bregman_leader(kwargs["loss"], kernel)
    if family == FAMILY_SCORING:
        return scoring_leader(
            kwargs["rule"], kernel, kwargs.get("p_lo", 0.05), kwargs.get("p_hi", 0.95)
        )
    if family == FAMILY_LOGLOSS:
        return logloss_leader(kernel)
    raise LeaderError(f"unknown leader family {family!r}")


# ============================================================
# Benchmarks
# ============================================================


@dataclass
class Benchmark:
    """A registered comparison strategy.

    norm is the RKHS norm (or a certified upper bound) of the *linked*
    function: F itself for the quadratic family, psi'(F) for Bregman,
    Exp(F) for the scoring families.
    """

    name: str
    strategy: PredictionStrategy
    norm: float
    family: str


class _LinkedStrategy(PredictionStrategy):
    """phi(s) = inverse(G(s)) for an expansion G in link space.

    clip, when given, is the certified closed range; it only removes float
    dust at the boundary (the reach certificate already places the exact
    value inside).
    """

    def __init__(self, expansion: KernelExpansion, inverse: Callable, clip=None):
        self.expansion = expansion
        self.inverse = inverse
        self.clip = clip

    def predict(self, situation: Situation) -> float:
        v = float(self.inverse(self.expansion.eval(situation)))
        if self.clip is not None:
            v = min(max(v, self.clip[0]), self.clip[1])
        return v


def direct_benchmark(name: str, expansion: KernelExpansion) -> Benchmark:
    """Quadratic-family benchmark: phi = F(s), norm = ||F||."""
    return Benchmark(name, expansion, expansion_norm(expansion), FAMILY_QUADRATIC)


def declared_benchmark(
    name: str, strategy: PredictionStrategy, norm_bound: float, family: str
) -> Benchmark:
    """Benchmark given directly with a certified norm upper bound (used for
    members of a truncated universal kernel)."""
    return Benchmark(name, strategy, float(norm_bound), family)


def linked_benchmark(
    name: str,
    expansion: KernelExpansion,
    leader: Leader,
) -> Benchmark:
    """Benchmark for a transformed family: the expansion G lives in link
    space (psi'(F) or Exp(F)) and phi = link^{-1}(G(s)).

    Construction certifies, via the reproducing bound |G(s)| <= ||G|| c,
    that every linked value lands inside the leader's prediction range;
    otherwise the benchmark is rejected.
    """
    family = leader.spec.family
    norm = expansion_norm(expansion)
    c = expansion.kernel.embedding_constant_bound
    reach = norm * c

    if family == FAMILY_BREGMAN:
        loss = leader.loss
        if loss.psi_prime_inverse is None:
            raise LossError("psi' is not invertible on the domain: cannot link benchmark")
        if reach > loss.psi_prime_sup * (1 + 1e-12):
            raise LeaderError(
                f"benchmark {name}: linked values reach {reach:.6g}, beyond sup|psi'| "
                f"{loss.psi_prime_sup:.6g}; cannot certify domain membership"
            )
        return Benchmark(
            name,
            _LinkedStrategy(expansion, loss.psi_prime_inverse, clip=loss.domain),
            norm,
            family,
        )

    if family in (FAMILY_SCORING, FAMILY_LOGLOSS):
        rule = leader.scoring_rule
        if rule.exposure_inverse is None:
            raise LossError("exposure is not invertible: cannot link benchmark")
        lo, hi, open_ends = leader.spec.prediction_interval
        if not open_ends:
            # Exp is strictly decreasing: range on [lo, hi] is [Exp(hi), Exp(lo)]
            exp_lo, exp_hi = exposure(rule, hi), exposure(rule, lo)
            if -reach < exp_lo - 1e-12 or reach > exp_hi + 1e-12:
                raise LeaderError(
                    f"benchmark {name}: linked values reach +/-{reach:.6g}, outside the "
                    f"exposure range [{exp_lo:.6g}, {exp_hi:.6g}] of the prediction interval"
                )
        return Benchmark(
            name,
            _LinkedStrategy(
                expansion, rule.exposure_inverse,
                clip=None if open_ends else (lo, hi),
            ),
            norm,
            family,
        )

    if family == FAMILY_QUADRATIC:
        return direct_benchmark(name, expansion)
    raise LeaderError(f"unknown family {family!r}")
