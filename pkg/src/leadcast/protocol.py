"""Core objects of the competitive on-line prediction protocol.

Each round n: Reality announces side information x_n, Predictor announces
mu_n, Reality announces outcome y_n.  A situation is everything visible to
the Predictor at decision time: the past (x, y) pairs plus the current x.
Benchmark strategies see the same situation and their predictions are
recorded next to the Predictor's.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

INTERVAL = "interval"
BINARY = "binary"


class ProtocolError(Exception):
    """Raised when a protocol contract is broken (bad outcome, bad shapes)."""


# ============================================================
# Outcome space
# ============================================================


@dataclass(frozen=True)
class OutcomeSpace:
    """Bounded outcome set: a closed interval [lower, upper] or binary {0, 1}.

    kind is "interval" or "binary"; binary spaces are pinned to {0, 1} so
    lower/upper must be 0 and 1.
    """

    lower: float
    upper: float
    kind: str = INTERVAL

    def __post_init__(self) -> None:
        if not (self.lower < self.upper):
            raise ProtocolError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if self.kind not in (INTERVAL, BINARY):
            raise ProtocolError(f"unknown outcome-space kind {self.kind!r}")
        if self.kind == BINARY and (self.lower != 0.0 or self.upper != 1.0):
            raise ProtocolError("binary outcome space must be {0, 1}")

    def diameter(self) -> float:
        return self.upper - self.lower

    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, y: float) -> bool:
        if self.kind == BINARY:
            return y == 0.0 or y == 1.0
        return self.lower <= y <= self.upper

    def sentinel(self) -> float:
        """A value strictly outside the space, used to pad short windows."""
        return self.lower - self.diameter()


def interval_space(lower: float, upper: float) -> OutcomeSpace:
    return OutcomeSpace(lower, upper, INTERVAL)


def binary_space() -> OutcomeSpace:
    return OutcomeSpace(0.0, 1.0, BINARY)


# ============================================================
# Situations and strategies
# ============================================================


@dataclass(frozen=True)
class Situation:
    """History of (x, y) pairs plus the current side information vector.

    The round index n is len(history) + 1: a situation with empty history
    belongs to round 1.
    """

    history: tuple  # tuple of (x: np.ndarray, y: float)
    current: np.ndarray

    @property
    def n(self) -> int:
        return len(self.history) + 1

    def extended(self, y: float, next_x: np.ndarray) -> "Situation":
        """The next round's situation after observing y here."""
        return Situation(self.history + ((self.current, float(y)),), next_x)


def make_situation(history: Iterable[tuple], current) -> Situation:
    """Build a Situation from plain lists; x entries become float vectors."""
    hist = tuple((np.asarray(x, dtype=float), float(y)) for x, y in history)
    return Situation(hist, np.asarray(current, dtype=float))


class PredictionStrategy:
    """Deterministic map from situations to real-valued predictions."""

    def predict(self, situation: Situation) -> float:
        raise NotImplementedError

    def observe(self, y: float) -> None:
        """Outcome notification after a prediction; the protocol runner calls
        this on the predicting strategy so stateful forecasters can settle
        their books without waiting for the next round.  No-op by default."""


class FunctionStrategy(PredictionStrategy):
    """Wrap a plain callable f(situation) -> float as a strategy."""

    def __init__(self, fn: Callable[[Situation], float], name: str = "fn"):
        self.fn = fn
        self.name = name

    def predict(self, situation: Situation) -> float:
        return float(self.fn(situation))


# ============================================================
# Windows and Markov lifts
# ============================================================


def window(situation: Situation, k: int) -> tuple:
    """Last min(k, n-1) (x, y) pairs plus the current x.

    Returns (pairs, current) where pairs is a tuple of the most recent
    history pairs in chronological order.
    """
    if k < 0:
        raise ProtocolError("window size k must be >= 0")
    pairs = situation.history[len(situation.history) - min(k, len(situation.history)):]
    return pairs, situation.current


def markov_lift(fn: Callable[[tuple], float], k: int, default: float) -> PredictionStrategy:
    """Lift a function of k-windows to a full strategy.

    Rounds with n <= k (window not yet full) predict `default`; afterwards
    the prediction is fn(window(s, k)).
    """

    class _Lifted(PredictionStrategy):
        def predict(self, situation: Situation) -> float:
            if situation.n <= k:
                return float(default)
            return float(fn(window(situation, k)))

    lifted = _Lifted()
    lifted.order = k  # type: ignore[attr-defined]
    return lifted


# ============================================================
# Traces
# ============================================================


@dataclass
class TraceRound:
    x: np.ndarray
    mu: float
    y: float
    phi: dict  # benchmark name -> prediction


@dataclass
class Trace:
    """Complete record of a protocol run, append-only."""

    space: OutcomeSpace
    benchmark_names: tuple
    rounds: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rounds)

    def append(self, x: np.ndarray, mu: float, y: float, phi: Mapping[str, float]) -> None:
        if not self.space.contains(y):
            raise ProtocolError(f"outcome {y} outside the outcome space at round {len(self) + 1}")
        missing = set(self.benchmark_names) - set(phi)
        if missing:
            raise ProtocolError(f"phi map missing benchmarks: {sorted(missing)}")
        self.rounds.append(TraceRound(np.asarray(x, dtype=float), float(mu), float(y), dict(phi)))

    # -- column views used all over the harness --

    def residuals(self) -> np.ndarray:
        return np.array([r.y - r.mu for r in self.rounds])

    def outcomes(self) -> np.ndarray:
        return np.array([r.y for r in self.rounds])

    def predictions(self) -> np.ndarray:
        return np.array([r.mu for r in self.rounds])

    def benchmark_predictions(self, name: str) -> np.ndarray:
        return np.array([r.phi[name] for r in self.rounds])

    def situation_at(self, i: int) -> Situation:
        """Situation shown to the strategies at round i (1-based)."""
        hist = tuple((r.x, r.y) for r in self.rounds[: i - 1])
        return Situation(hist, self.rounds[i - 1].x)

    def situations(self) -> list:
        return [self.situation_at(i) for i in range(1, len(self) + 1)]

    # -- serialization; repr-formatted floats round-trip exactly --

    def to_csv(self, path: str) -> None:
        d = len(self.rounds[0].x) if self.rounds else 0
        header = ["n"] + [f"x{j}" for j in range(d)] + ["mu", "y"] + [
            f"phi_{name}" for name in self.benchmark_names
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, r in enumerate(self.rounds, start=1):
                row = [i] + [repr(float(v)) for v in r.x] + [repr(r.mu), repr(r.y)]
                row += [repr(r.phi[name]) for name in self.benchmark_names]
                writer.writerow(row)

    @staticmethod
    def from_csv(path: str, space: OutcomeSpace) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            xcols = [c for c in header if c.startswith("x") and c[1:].isdigit()]
            names = tuple(c[len("phi_"):] for c in header if c.startswith("phi_"))
            idx = {c: header.index(c) for c in header}
            trace = Trace(space, names)
            for row in reader:
                x = np.array([float(row[idx[c]]) for c in xcols])
                mu = float(row[idx["mu"]])
                y = float(row[idx["y"]])
                phi = {name: float(row[idx[f"phi_{name}"]]) for name in names}
                trace.append(x, mu, y, phi)
        return trace


# ============================================================
# Protocol runner
# ============================================================


class Reality:
    """Data source for a run.  next_x is called before the prediction,
    next_y after it, so adversarial sources may react to mu_n."""

    def next_x(self) -> np.ndarray:
        raise NotImplementedError

    def next_y(self, mu: float, phi: Mapping[str, float]) -> float:
        raise NotImplementedError


def run_protocol(
    reality: Reality,
    leader: PredictionStrategy,
    benchmarks: Optional[Mapping[str, PredictionStrategy]] = None,
    n_rounds: int = 0,
    space: Optional[OutcomeSpace] = None,
) -> Trace:
    """Run the protocol for n_rounds and record everything.

    Order within a round: x_n from reality, mu_n from the leader and phi_n
    from every benchmark (all from the same situation), then y_n from
    reality, which may depend on mu_n.  An outcome outside the space aborts
    the run with a diagnostic.
    """
    benchmarks = dict(benchmarks or {})
    if space is None:
        space = getattr(reality, "space", None)
    if space is None:
        raise ProtocolError("no outcome space given and reality declares none")
    trace = Trace(space, tuple(benchmarks))
    situation: Optional[Situation] = None
    for n in range(1, n_rounds + 1):
        x = np.asarray(reality.next_x(), dtype=float)
        if situation is None:
            situation = Situation((), x)
        else:
            prev = trace.rounds[-1]
            situation = situation.extended(prev.y, x)
        mu = float(leader.predict(situation))
        phi = {name: float(s.predict(situation)) for name, s in benchmarks.items()}
        y = float(reality.next_y(mu, phi))
        if not space.contains(y):
            raise ProtocolError(f"reality emitted y={y} outside the outcome space at round {n}")
        trace.append(x, mu, y, phi)
        leader.observe(y)
    return trace


def replay_predictions(
    trace: Trace,
    leader: PredictionStrategy,
    benchmarks: Mapping[str, PredictionStrategy],
) -> tuple:
    """Feed a recorded trace's situations through fresh strategies.

    Returns (mus, phis) where mus is an array of replayed leader predictions
    and phis maps benchmark name -> array.  Used by verify: a faithful
    implementation reproduces the recorded values bit for bit.
    """
    mus = []
    phis: dict = {name: [] for name in benchmarks}
    for i in range(1, len(trace) + 1):
        s = trace.situation_at(i)
        mus.append(float(leader.predict(s)))
        for name, strat in benchmarks.items():
            phis[name].append(float(strat.predict(s)))
    return np.array(mus), {name: np.array(v) for name, v in phis.items()}
