"""Benchmark harness: identity gaps, certified bound reports, Monte Carlo
checks of the stochastic consequences, and helpers to build random
comparison strategies.

Every certified inequality is evaluated on every prefix of a run; a
violation means the margin dips below -1e-6 of the bound.  The loss-sum
route and the residual-identity route for the three-term gap are both
computed and cross-checked, never collapsed into one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .generators import StochasticTruth, random_situations
from .kernels import KernelExpansion, SituationKernel, expansion_norm, scaled_to_norm
from .leaders import (
    FAMILY_BREGMAN,
    FAMILY_LOGLOSS,
    FAMILY_QUADRATIC,
    FAMILY_SCORING,
    Benchmark,
    Leader,
    direct_benchmark,
    linked_benchmark,
    quadratic_leader,
)
from .losses import (
    BregmanLoss,
    LOGIT_WEIGHT_BOUND,
    ScoringRule,
    bregman_div,
    exposure,
    extend,
    quadratic_loss,
    rule_divergence,
)
from .protocol import OutcomeSpace, PredictionStrategy, Trace, run_protocol

VIOLATION_REL_TOL = 1e-6


class BenchError(Exception):
    pass


# ============================================================
# Three-term gaps
# ============================================================


@dataclass
class GapSeries:
    """Cumulative three-term gap plus its residual-identity twin."""

    family: str
    benchmark: str
    gap: np.ndarray       # cumulative: loss(leader) + middle term - loss(benchmark)
    identity: np.ndarray  # cumulative residual route
    scale: np.ndarray     # cumulative absolute mass, for relative residuals

    @property
    def max_rel_residual(self) -> float:
        return float(np.max(np.abs(self.gap - self.identity) / self.scale))

    @property
    def per_round_average(self) -> np.ndarray:
        return self.gap / np.arange(1, len(self.gap) + 1)


def three_term_gap(
    trace: Trace,
    benchmark_name: str,
    family: str,
    loss: Optional[BregmanLoss] = None,
    rule: Optional[ScoringRule] = None,
) -> GapSeries:
    """Cumulative loss(leader) + divergence(mu, phi) - loss(benchmark).

    The identity twin uses the exact algebraic form of the gap (residuals
    times transformed-prediction differences) and must agree to 1e-9
    relative; both routes are returned.
    """
    ys = trace.outcomes()
    mus = trace.predictions()
    phis = trace.benchmark_predictions(benchmark_name)

    if family == FAMILY_QUADRATIC:
        t1 = np.square(ys - mus)
        t2 = np.square(mus - phis)
        t3 = np.square(ys - phis)
        ident = 2.0 * (phis - mus) * (ys - mus)
    elif family == FAMILY_BREGMAN:
        if loss is None:
            raise BenchError("bregman gap needs the loss")
        t1 = bregman_div(loss, ys, mus)
        t2 = bregman_div(loss, mus, phis)
        t3 = bregman_div(loss, ys, phis)
        ident = (loss.psi_prime(phis) - loss.psi_prime(mus)) * (ys - mus)
    elif family in (FAMILY_SCORING, FAMILY_LOGLOSS):
        if rule is None:
            raise BenchError("scoring gap needs the rule")
        t1 = extend(rule, ys, mus)
        t2 = rule_divergence(rule, mus, phis)
        t3 = extend(rule, ys, phis)
        ident = (exposure(rule, mus) - exposure(rule, phis)) * (ys - mus)
    else:
        raise BenchError(f"unknown family {family!r}")

    gap = np.cumsum(t1 + t2 - t3)
    identity = np.cumsum(ident)
    scale = np.maximum(1.0, np.cumsum(np.abs(t1) + np.abs(t2) + np.abs(t3)))
    return GapSeries(family, benchmark_name, gap, identity, scale)


# ============================================================
# Certified bounds
# ============================================================


def bound_rhs(family: str, c: float, scale: float, bench_norm: float, aux_norm: float, n):
    """Bound on the absolute three-term gap after n rounds.

    quadratic: 2 Y sqrt(c^2+1) (norm + Y) sqrt(n)        (scale = aux = Y)
    bregman:   diam sqrt(c^2+1) (norm + sup|psi'|) sqrt(n)
    scoring:   sqrt(c^2+1)/2 (norm + sup|Exp|) sqrt(n)
    logloss:   sqrt(c^2+1.8)/2 (norm + 1) sqrt(n)
    """
    n = np.asarray(n, dtype=float)
    if family == FAMILY_QUADRATIC:
        front = 2.0 * scale * math.sqrt(c * c + 1.0)
    elif family == FAMILY_BREGMAN:
        front = scale * math.sqrt(c * c + 1.0)
    elif family == FAMILY_SCORING:
        front = 0.5 * math.sqrt(c * c + 1.0)
    elif family == FAMILY_LOGLOSS:
        front = 0.5 * math.sqrt(c * c + LOGIT_WEIGHT_BOUND)
    else:
        raise BenchError(f"unknown family {family!r}")
    out = front * (bench_norm + aux_norm) * np.sqrt(n)
    return float(out) if out.ndim == 0 else out


@dataclass
class BoundReport:
    """Per-prefix certificate for one benchmark on one run."""

    benchmark: str
    family: str
    bench_norm: float
    prefixes: np.ndarray
    lhs: np.ndarray          # |cumulative gap|
    rhs: np.ndarray
    margin: np.ndarray       # rhs - lhs
    potential: Optional[np.ndarray]
    slack: Optional[np.ndarray]
    gap_rel_residual: float  # loss route vs identity route agreement

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.margin < -VIOLATION_REL_TOL * self.rhs))

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def min_rel_margin(self) -> float:
        return float(np.min(self.margin / self.rhs))


def _leader_diag_columns(trace: Trace, leader: Leader):
    rows = leader.diagnostics_rows()
    if len(rows) != len(trace):
        return None, None
    mus = np.array([row["mu"] for row in rows])
    if not np.array_equal(mus, trace.predictions()):
        return None, None
    pot = np.array([row["potential_sq"] for row in rows])
    slack = np.array([row["cum_slack"] for row in rows])
    return pot, slack


def check_bound(
    trace: Trace,
    benchmark: Benchmark,
    leader: Leader,
    family: Optional[str] = None,
    bench_norm: Optional[float] = None,
    scale: Optional[float] = None,
    aux_norm: Optional[float] = None,
    loss: Optional[BregmanLoss] = None,
    rule: Optional[ScoringRule] = None,
) -> BoundReport:
    """Evaluate the family's certified bound on every prefix of the trace.

    The family/constants default to the leader's own; passing overrides
    evaluates a second functional form on the same run (the quadratic
    leader is also checked against the Bregman form with psi(y) = y^2,
    whose constants are exactly twice as large).
    """
    spec = leader.spec
    family = family or spec.family
    scale = spec.scale if scale is None else scale
    aux_norm = spec.aux_norm if aux_norm is None else aux_norm
    bench_norm = benchmark.norm if bench_norm is None else bench_norm
    loss = loss if loss is not None else leader.loss
    rule = rule if rule is not None else leader.scoring_rule

    series = three_term_gap(trace, benchmark.name, family, loss=loss, rule=rule)
    n = len(trace)
    prefixes = np.arange(1, n + 1)
    lhs = np.abs(series.gap)
    rhs = bound_rhs(family, spec.kernel_bound, scale, bench_norm, aux_norm, prefixes)
    pot, slack = _leader_diag_columns(trace, leader)
    return BoundReport(
        benchmark=benchmark.name,
        family=family,
        bench_norm=bench_norm,
        prefixes=prefixes,
        lhs=lhs,
        rhs=rhs,
        margin=rhs - lhs,
        potential=pot,
        slack=slack,
        gap_rel_residual=series.max_rel_residual,
    )


def quadratic_dual_reports(trace: Trace, benchmark: Benchmark, leader: Leader) -> tuple:
    """The quadratic leader's bound plus the Bregman form with psi(y) = y^2
    on the same trace (diameter 2Y, sup|psi'| = 2Y, linked norm 2||F||)."""
    if leader.spec.family != FAMILY_QUADRATIC:
        raise BenchError("dual report is defined for the quadratic leader")
    y_bound = leader.spec.scale
    primary = check_bound(trace, benchmark, leader)
    as_bregman = check_bound(
        trace,
        benchmark,
        leader,
        family=FAMILY_BREGMAN,
        bench_norm=2.0 * benchmark.norm,
        scale=2.0 * y_bound,
        aux_norm=2.0 * y_bound,
        loss=quadratic_loss(y_bound),
    )
    return primary, as_bregman


# ============================================================
# Stochastic consequences
# ============================================================


def hoeffding_rhs(Y: float, delta: float, n) -> float:
    n = np.asarray(n, dtype=float)
    out = 4.0 * Y * Y * np.sqrt(2.0 * math.log(2.0 / delta)) * np.sqrt(n)
    return float(out) if out.ndim == 0 else out


@dataclass
class MonteCarloResult:
    runs: int
    violations: int
    rhs: float
    lhs_values: np.ndarray

    @property
    def rate(self) -> float:
        return self.violations / self.runs


def hoeffding_check(
    space: OutcomeSpace,
    d: int,
    truth: PredictionStrategy,
    amplitude: float,
    other_factory: Callable[[], PredictionStrategy],
    n_rounds: int,
    delta: float,
    runs: int,
    seed: int,
) -> MonteCarloResult:
    """Monte Carlo check of the squared-loss three-term reversal under a
    stochastic reality: for each run, reality draws y centred on the truth
    strategy, `other_factory` supplies the strategy under test, and the
    absolute gap |sum (y-phi)^2 + sum (phi-mu)^2 - sum (y-mu)^2| at n_rounds
    is compared against 4 Y^2 sqrt(2 ln(2/delta) n)."""
    if abs(space.lower + space.upper) > 1e-12:
        raise BenchError("the stochastic bound is stated for symmetric spaces [-Y, Y]")
    y_bound = space.upper
    rhs = hoeffding_rhs(y_bound, delta, n_rounds)
    child_seeds = np.random.SeedSequence(seed).generate_state(runs, np.uint64)
    lhs_values = np.empty(runs)
    violations = 0
    for k in range(runs):
        reality = StochasticTruth(space, d, int(child_seeds[k]), truth, amplitude)
        other = other_factory()
        trace = run_protocol(reality, other, {"truth": truth}, n_rounds, space=space)
        ys = trace.outcomes()
        mus = trace.predictions()
        phis = trace.benchmark_predictions("truth")
        gap = np.sum(np.square(ys - phis)) + np.sum(np.square(phis - mus)) - np.sum(
            np.square(ys - mus)
        )
        lhs_values[k] = abs(gap)
        if lhs_values[k] > rhs * (1.0 + VIOLATION_REL_TOL):
            violations += 1
    return MonteCarloResult(runs, violations, rhs, lhs_values)


def jeffreys_rhs(Y: float, c: float, bench_norm: float, delta: float, n) -> float:
    """Bound for both sides of the high-probability proximity pair: half the
    deterministic quadratic bound plus half the stochastic reversal bound."""
    n = np.asarray(n, dtype=float)
    det = Y * math.sqrt(c * c + 1.0) * (bench_norm + Y) * np.sqrt(n)
    sto = 2.0 * Y * Y * np.sqrt(2.0 * math.log(2.0 / delta)) * np.sqrt(n)
    out = det + sto
    return float(out) if out.ndim == 0 else out


@dataclass
class JeffreysResult:
    runs: int
    violations: int          # joint: either inequality failing counts once
    rhs: float
    proximity: np.ndarray    # sum (phi - mu)^2 / N per run
    trend_medians: dict      # n -> median proximity

    @property
    def rate(self) -> float:
        return self.violations / self.runs


def jeffreys_experiment(
    space: OutcomeSpace,
    d: int,
    kernel: SituationKernel,
    truth_expansion: KernelExpansion,
    amplitude: float,
    n_rounds: int,
    delta: float,
    runs: int,
    seed: int,
    trend_ns: Sequence[int] = (),
    trend_runs: int = 25,
) -> JeffreysResult:
    """Leader vs truth benchmark under stochastic reality: checks that the
    loss difference and the prediction proximity both stay within the
    combined bound, and tracks median proximity per round across horizons."""
    if abs(space.lower + space.upper) > 1e-12:
        raise BenchError("stated for symmetric spaces [-Y, Y]")
    y_bound = space.upper
    bench = direct_benchmark("truth", truth_expansion)
    c = kernel.embedding_constant_bound
    rhs = jeffreys_rhs(y_bound, c, bench.norm, delta, n_rounds)

    def one_run(n: int, run_seed: int) -> tuple:
        reality = StochasticTruth(space, d, run_seed, truth_expansion, amplitude)
        leader = quadratic_leader(y_bound, kernel)
        trace = run_protocol(reality, leader, {"truth": bench.strategy}, n, space=space)
        ys = trace.outcomes()
        mus = trace.predictions()
        phis = trace.benchmark_predictions("truth")
        loss_gap = abs(float(np.sum(np.square(ys - mus)) - np.sum(np.square(ys - phis))))
        prox = float(np.sum(np.square(phis - mus)))
        return loss_gap, prox

    child = np.random.SeedSequence(seed).generate_state(runs + trend_runs * len(trend_ns), np.uint64)
    proximity = np.empty(runs)
    violations = 0
    for k in range(runs):
        loss_gap, prox = one_run(n_rounds, int(child[k]))
        proximity[k] = prox / n_rounds
        tol = rhs * (1.0 + VIOLATION_REL_TOL)
        if loss_gap > tol or prox > tol:
            violations += 1

    trend_medians = {}
    idx = runs
    for n in trend_ns:
        vals = []
        for _ in range(trend_runs):
            _, prox = one_run(int(n), int(child[idx]))
            vals.append(prox / n)
            idx += 1
        trend_medians[int(n)] = float(np.median(vals))
    return JeffreysResult(runs, violations, rhs, proximity, trend_medians)


# ============================================================
# Exact identities and direct proximity consequences
# ============================================================


def mixing_identity_residual(phi1, phi2, y):
    """((phi1+phi2)/2 - y)^2 - [((phi1-y)^2 + (phi2-y)^2)/2 - ((phi1-phi2)/2)^2]."""
    phi1 = np.asarray(phi1, dtype=float)
    phi2 = np.asarray(phi2, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = np.square(0.5 * (phi1 + phi2) - y)
    rhs = 0.5 * (np.square(phi1 - y) + np.square(phi2 - y)) - np.square(0.5 * (phi1 - phi2))
    out = lhs - rhs
    return float(out) if out.ndim == 0 else out


def mixing_identity_check(phi1, phi2, y, tol: float = 1e-12) -> float:
    res = np.max(np.abs(np.atleast_1d(mixing_identity_residual(phi1, phi2, y))))
    if res > tol:
        raise BenchError(f"mixing identity residual {res} above {tol}")
    return float(res)


@dataclass
class ProximityReport:
    """Direct consequences of the quadratic bound on one trace."""

    per_benchmark_margin: dict   # name -> margin of sum(phi-mu)^2 <= loss diff + bound
    pair_margin: Optional[float] # sum(phi1-phi2)^2 <= 2 sum(phi1-mu)^2 + 2 sum(phi2-mu)^2


def pure_jeffreys_check(trace: Trace, leader: Leader, benchmarks: Sequence[Benchmark]) -> ProximityReport:
    if leader.spec.family != FAMILY_QUADRATIC:
        raise BenchError("proximity consequences are stated for the quadratic family")
    y_bound = leader.spec.scale
    c = leader.spec.kernel_bound
    n = len(trace)
    ys = trace.outcomes()
    mus = trace.predictions()
    margins = {}
    for b in benchmarks:
        phis = trace.benchmark_predictions(b.name)
        bound = 2.0 * y_bound * math.sqrt(c * c + 1.0) * (b.norm + y_bound) * math.sqrt(n)
        lhs = float(np.sum(np.square(phis - mus)))
        rhs = float(np.sum(np.square(ys - phis)) - np.sum(np.square(ys - mus))) + bound
        margins[b.name] = rhs - lhs
    pair_margin = None
    if len(benchmarks) >= 2:
        p1 = trace.benchmark_predictions(benchmarks[0].name)
        p2 = trace.benchmark_predictions(benchmarks[1].name)
        lhs = float(np.sum(np.square(p1 - p2)))
        rhs = 2.0 * float(np.sum(np.square(p1 - mus))) + 2.0 * float(np.sum(np.square(p2 - mus)))
        pair_margin = rhs - lhs
    return ProximityReport(margins, pair_margin)


# ============================================================
# Random benchmark construction
# ============================================================


def random_expansion(
    kernel: SituationKernel,
    rng: np.random.Generator,
    space: OutcomeSpace,
    d: int,
    n_centers: int,
    target_norm: float,
    hist_len: int = 3,
) -> KernelExpansion:
    centers = random_situations(rng, space, d, n_centers, hist_len)
    coeffs = rng.standard_normal(n_centers)
    expansion = KernelExpansion(kernel, centers, coeffs)
    return scaled_to_norm(expansion, target_norm)


def random_benchmarks(
    leader: Leader,
    kernel: SituationKernel,
    rng: np.random.Generator,
    space: OutcomeSpace,
    d: int,
    count: int,
    norm_lo: float,
    norm_hi: float,
    n_centers: int = 12,
) -> list:
    """Benchmarks with RKHS norms spread over [norm_lo, norm_hi]; expansions
    live in link space for transformed families and are certified there."""
    norms = np.linspace(norm_lo, norm_hi, count)
    out = []
    for i, target in enumerate(norms):
        expansion = random_expansion(kernel, rng, space, d, n_centers, float(target))
        name = f"b{i:02d}"
        if leader.spec.family == FAMILY_QUADRATIC:
            out.append(direct_benchmark(name, expansion))
        else:
            out.append(linked_benchmark(name, expansion, leader))
    return out


def run_and_report(
    leader: Leader,
    reality,
    benchmarks: Sequence[Benchmark],
    n_rounds: int,
) -> tuple:
    """Run the protocol and certify every benchmark; returns (trace, reports)."""
    trace = run_protocol(
        reality, leader, {b.name: b.strategy for b in benchmarks}, n_rounds,
        space=getattr(reality, "space", None),
    )
    reports = [check_bound(trace, b, leader) for b in benchmarks]
    return trace, reports
