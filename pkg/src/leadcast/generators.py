"""Reality processes used by the benchmark harness.

Every generator is seeded and deterministic, emits side information before
seeing the prediction and the outcome after, and never emits an outcome
outside its outcome space.  The adversarial kind reacts to the prediction
(or to a target benchmark's prediction); the stochastic-truth kind draws
outcomes centred on a registered strategy with conditionally-symmetric
noise, so the noise is exactly zero-mean given the situation.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

import numpy as np

from .protocol import (
    BINARY,
    OutcomeSpace,
    PredictionStrategy,
    ProtocolError,
    Reality,
    Situation,
)

IID_UNIFORM = "iid_uniform"
AR1_CLIPPED = "ar1_clipped"
SINUSOID = "sinusoid"
ADVERSARIAL_SIGN = "adversarial_sign"
STOCHASTIC_TRUTH = "stochastic_truth"

GENERATOR_KINDS = (IID_UNIFORM, AR1_CLIPPED, SINUSOID, ADVERSARIAL_SIGN, STOCHASTIC_TRUTH)


class Generator(Reality):
    """Base: seeded RNG plus a mirror of the growing situation, so kinds
    that need the full situation (stochastic truth) can evaluate it."""

    kind = "base"

    def __init__(self, space: OutcomeSpace, d: int, seed: int):
        self.space = space
        self.d = int(d)
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self._situation: Optional[Situation] = None
        self._round = 0

    def next_x(self) -> np.ndarray:
        x = self._draw_x()
        if self._situation is None:
            self._situation = Situation((), x)
        else:
            self._situation = self._situation.extended(self._last_y, x)
        self._round += 1
        return x

    def next_y(self, mu: float, phi: Mapping[str, float]) -> float:
        y = float(self._draw_y(mu, phi))
        if not self.space.contains(y):
            raise ProtocolError(f"generator {self.kind} produced out-of-space y={y}")
        self._last_y = y
        return y

    def _draw_x(self) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, self.d)

    def _draw_y(self, mu: float, phi: Mapping[str, float]) -> float:
        raise NotImplementedError

    def _bernoulli(self, p: float) -> float:
        return 1.0 if self.rng.random() < p else 0.0


class IIDUniform(Generator):
    """Outcomes independent of everything: uniform on the interval, or a
    fair coin for binary spaces."""

    kind = IID_UNIFORM

    def _draw_y(self, mu, phi):
        if self.space.kind == BINARY:
            return self._bernoulli(0.5)
        return self.rng.uniform(self.space.lower, self.space.upper)


class AR1Clipped(Generator):
    """Latent AR(1) z_n = rho z + sigma w; interval outcomes clip mid + z
    into the space, binary outcomes squash z to an interior probability."""

    kind = AR1_CLIPPED

    def __init__(self, space, d, seed, rho: float = 0.8, sigma_frac: float = 0.25):
        super().__init__(space, d, seed)
        self.rho = float(rho)
        self.sigma = float(sigma_frac) * space.diameter()
        self._z = 0.0

    def _draw_y(self, mu, phi):
        self._z = self.rho * self._z + self.sigma * self.rng.standard_normal()
        if self.space.kind == BINARY:
            p = 0.5 + 0.35 * math.tanh(self._z)
            return self._bernoulli(p)
        return float(np.clip(self.space.midpoint() + self._z, self.space.lower, self.space.upper))


class Sinusoid(Generator):
    """Deterministic seasonal drift plus small noise, clipped into the space."""

    kind = SINUSOID

    def __init__(self, space, d, seed, period: float = 40.0,
                 amp_frac: float = 0.35, noise_frac: float = 0.05):
        super().__init__(space, d, seed)
        self.period = float(period)
        self.amp = float(amp_frac) * space.diameter()
        self.noise = float(noise_frac) * space.diameter()

    def _draw_y(self, mu, phi):
        base = math.sin(2.0 * math.pi * self._round / self.period)
        if self.space.kind == BINARY:
            p = 0.5 + 0.35 * base
            return self._bernoulli(p)
        y = self.space.midpoint() + self.amp * base + self.noise * self.rng.standard_normal()
        return float(np.clip(y, self.space.lower, self.space.upper))


class AdversarialSign(Generator):
    """Reacts to the announced prediction: emits the outcome endpoint that
    maximizes |y - reference|, the reference being the leader's mu or, when
    `target` names a benchmark, that benchmark's prediction."""

    kind = ADVERSARIAL_SIGN

    def __init__(self, space, d, seed, target: Optional[str] = None):
        super().__init__(space, d, seed)
        self.target = target

    def _draw_y(self, mu, phi):
        ref = phi[self.target] if self.target is not None else mu
        return self.space.upper if ref < self.space.midpoint() else self.space.lower


class StochasticTruth(Generator):
    """y_n centred on a truth strategy's prediction.

    Interval spaces: y = p + xi with xi ~ U(-b, b), b = min(amplitude,
    distance of p to either space bound); the symmetric conditional law
    makes xi exactly zero-mean given the situation and keeps y in space.
    Binary spaces: y ~ Bernoulli(p).  The truth strategy must predict
    inside the space.
    """

    kind = STOCHASTIC_TRUTH

    def __init__(self, space, d, seed, truth: PredictionStrategy, amplitude: float = 0.25):
        super().__init__(space, d, seed)
        self.truth = truth
        self.amplitude = float(amplitude)

    def _draw_y(self, mu, phi):
        p = float(self.truth.predict(self._situation))
        lo, hi = self.space.lower, self.space.upper
        if not (lo - 1e-12 <= p <= hi + 1e-12):
            raise ProtocolError(f"truth strategy predicted {p} outside the outcome space")
        if self.space.kind == BINARY:
            return self._bernoulli(p)
        b = min(self.amplitude, hi - p, p - lo)
        if b <= 0.0:
            return float(np.clip(p, lo, hi))
        return float(p + self.rng.uniform(-b, b))


def make_generator(kind: str, space: OutcomeSpace, d: int, seed: int, **params) -> Generator:
    if kind == IID_UNIFORM:
        return IIDUniform(space, d, seed)
    if kind == AR1_CLIPPED:
        return AR1Clipped(space, d, seed, **params)
    if kind == SINUSOID:
        return Sinusoid(space, d, seed, **params)
    if kind == ADVERSARIAL_SIGN:
        return AdversarialSign(space, d, seed, **params)
    if kind == STOCHASTIC_TRUTH:
        return StochasticTruth(space, d, seed, **params)
    raise ProtocolError(f"unknown generator kind {kind!r}")


def random_situations(
    rng: np.random.Generator,
    space: OutcomeSpace,
    d: int,
    count: int,
    hist_len: int = 3,
) -> list:
    """Synthetic situations (for kernel-expansion centers and samplers)."""
    out = []
    for _ in range(count):
        n_hist = int(rng.integers(0, hist_len + 1))
        hist = []
        for _ in range(n_hist):
            x = rng.uniform(-1.0, 1.0, d)
            if space.kind == BINARY:
                y = float(rng.integers(0, 2))
            else:
                y = float(rng.uniform(space.lower, space.upper))
            hist.append((x, y))
        out.append(Situation(tuple(hist), rng.uniform(-1.0, 1.0, d)))
    return out
