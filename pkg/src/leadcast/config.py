"""Flat key = value experiment configuration.

Grammar: one `key = value` pair per line, `#` starts a comment, blank lines
ignored.  Dotted keys nest (`kernel.gamma = 0.5`); values are parsed as JSON
where possible (numbers, booleans, arrays like `[[0.1, 0.2], [0.3, 0.4]]`),
otherwise kept as bare strings.  `assemble` turns the parsed mapping into a
ready-to-run Experiment; every constructive error raises ConfigError so the
CLI can map it to the bad-config exit code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .bench import random_expansion
from .generators import (
    ADVERSARIAL_SIGN,
    GENERATOR_KINDS,
    STOCHASTIC_TRUTH,
    make_generator,
)
from .kernels import (
    SituationKernel,
    rbf_window_kernel,
    linear_window_kernel,
    truncated_universal_kernel,
)
from .leaders import (
    FAMILY_BREGMAN,
    FAMILY_LOGLOSS,
    FAMILY_QUADRATIC,
    FAMILY_SCORING,
    Benchmark,
    Leader,
    declared_benchmark,
    direct_benchmark,
    linked_benchmark,
    make_leader,
)
from .losses import brier, log_loss, negative_entropy_loss
from .protocol import (
    OutcomeSpace,
    Situation,
    binary_space,
    interval_space,
    markov_lift,
)


class ConfigError(Exception):
    pass


# ============================================================
# Parsing
# ============================================================


def parse_config_text(text: str) -> dict:
    """Flat `key = value` lines into a nested dict (dots nest)."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        value = value.strip()
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key!r} clashes with a scalar")
        if parts[-1] in node and isinstance(node[parts[-1]], dict):
            raise ConfigError(f"line {lineno}: key {key!r} clashes with a section")
        node[parts[-1]] = parsed
    return out


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _get(cfg: Mapping, key: str, default=None, required: bool = False):
    node = cfg
    for part in key.split("."):
        if not isinstance(node, Mapping) or part not in node:
            if required:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        node = node[part]
    return node


# ============================================================
# Assembly
# ============================================================


def build_space(cfg: Mapping) -> OutcomeSpace:
    kind = _get(cfg, "space.kind", required=True)
    if kind == "binary":
        return binary_space()
    if kind == "interval":
        lower = _get(cfg, "space.lower", required=True)
        upper = _get(cfg, "space.upper", required=True)
        try:
            return interval_space(float(lower), float(upper))
        except Exception as exc:
            raise ConfigError(f"bad interval space: {exc}") from exc
    raise ConfigError(f"unknown space.kind {kind!r}")


def default_universal_members(
    m: int, d: int, scale: float, window_orders=(0, 1, 2)
) -> list:
    """A reproducible family of m lifted limited-memory strategies with
    known sup bounds: member j squashes a fixed random linear functional of
    its window through scale*tanh, so |output| <= scale everywhere.

    Returns [(strategy, sup_bound)] ready for the truncated universal
    kernel; member j's representer has RKHS norm 2^j * sup_bound there.
    """
    members = []
    for j in range(m):
        k = window_orders[j % len(window_orders)]
        rng = np.random.default_rng(987654321 + j)
        w_cur = rng.standard_normal(d)
        w_hist = rng.standard_normal((k, d + 1))
        bias = float(rng.standard_normal())

        def fn(win, w_cur=w_cur, w_hist=w_hist, bias=bias):
            pairs, current = win
            t = float(w_cur @ current) + bias
            for i, (x, y) in enumerate(pairs):
                t += float(w_hist[i, :-1] @ x) + w_hist[i, -1] * y
            return scale * math.tanh(t)

        strategy = markov_lift(fn, k, default=0.0)
        strategy.name = f"member{j + 1}"
        members.append((strategy, scale))
    return members


def build_kernel(cfg: Mapping, space: OutcomeSpace, d: int) -> SituationKernel:
    ktype = _get(cfg, "kernel.type", required=True)
    k = int(_get(cfg, "kernel.k", 1))
    if ktype == "rbf_window":
        gamma = float(_get(cfg, "kernel.gamma", 0.5))
        try:
            return rbf_window_kernel(k, gamma, space)
        except Exception as exc:
            raise ConfigError(f"bad rbf kernel: {exc}") from exc
    if ktype == "linear_window":
        bound = float(_get(cfg, "kernel.bound", required=True))
        return linear_window_kernel(k, space, bound)
    if ktype == "universal":
        m = int(_get(cfg, "kernel.members", 8))
        scale = float(_get(cfg, "kernel.member_scale", 0.5))
        members = default_universal_members(m, d, scale)
        kernel = truncated_universal_kernel(members)
        kernel.members_meta = members  # strategies reused as benchmarks/truth
        return kernel
    raise ConfigError(f"unknown kernel.type {ktype!r}")


def build_leader_factory(cfg: Mapping, kernel: SituationKernel, space: OutcomeSpace) -> Callable[[], Leader]:
    family = _get(cfg, "leader.family", required=True)
    if family == FAMILY_QUADRATIC:
        if space.kind != "interval" or abs(space.lower + space.upper) > 1e-12:
            raise ConfigError("quadratic leader needs a symmetric interval space [-Y, Y]")
        y_bound = float(_get(cfg, "leader.Y", space.upper))
        if abs(y_bound - space.upper) > 1e-12:
            raise ConfigError("leader.Y must equal the space bound")
        return lambda: make_leader(FAMILY_QUADRATIC, kernel, Y=y_bound)
    if family == FAMILY_BREGMAN:
        loss_name = _get(cfg, "leader.loss", "negative_entropy")
        if loss_name != "negative_entropy":
            raise ConfigError(f"unknown leader.loss {loss_name!r}")
        eps = float(_get(cfg, "leader.eps", 0.05))
        loss = negative_entropy_loss(eps)
        return lambda: make_leader(FAMILY_BREGMAN, kernel, loss=loss)
    if family == FAMILY_SCORING:
        if space.kind != "binary":
            raise ConfigError("scoring leader needs the binary space")
        rule_name = _get(cfg, "leader.rule", "brier")
        if rule_name == "brier":
            rule_factory = brier
        elif rule_name == "log_loss":
            rule_factory = log_loss
        else:
            raise ConfigError(f"unknown leader.rule {rule_name!r}")
        p_lo = float(_get(cfg, "leader.p_lo", 0.05))
        p_hi = float(_get(cfg, "leader.p_hi", 0.95))
        return lambda: make_leader(
            FAMILY_SCORING, kernel, rule=rule_factory(), p_lo=p_lo, p_hi=p_hi
        )
    if family == FAMILY_LOGLOSS:
        if space.kind != "binary":
            raise ConfigError("log-loss leader needs the binary space")
        return lambda: make_leader(FAMILY_LOGLOSS, kernel)
    raise ConfigError(f"unknown leader.family {family!r}")


def _explicit_expansion(kernel: SituationKernel, d: int, spec: Mapping, name: str):
    coeffs = spec.get("coeffs")
    centers = spec.get("centers")
    if coeffs is None or centers is None:
        raise ConfigError(f"benchmark.{name} needs both coeffs and centers")
    if len(coeffs) != len(centers):
        raise ConfigError(f"benchmark.{name}: {len(coeffs)} coeffs vs {len(centers)} centers")
    sits = []
    for vec in centers:
        arr = np.asarray(vec, dtype=float)
        if arr.shape != (d,):
            raise ConfigError(f"benchmark.{name}: center {vec} is not a length-{d} vector")
        sits.append(Situation((), arr))
    from .kernels import KernelExpansion

    return KernelExpansion(kernel, sits, np.asarray(coeffs, dtype=float))


def build_benchmarks(
    cfg: Mapping,
    kernel: SituationKernel,
    space: OutcomeSpace,
    d: int,
    leader: Leader,
    seed: int,
) -> list:
    out: list = []
    count = int(_get(cfg, "benchmarks.count", 0))
    if count > 0:
        norm_lo = float(_get(cfg, "benchmarks.norm_lo", 0.0))
        norm_hi = float(_get(cfg, "benchmarks.norm_hi", 1.0))
        n_centers = int(_get(cfg, "benchmarks.centers", 12))
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
        from .bench import random_benchmarks

        try:
            out.extend(
                random_benchmarks(leader, kernel, rng, space, d, count, norm_lo, norm_hi, n_centers)
            )
        except Exception as exc:
            raise ConfigError(f"random benchmarks: {exc}") from exc
    explicit = cfg.get("benchmark", {})
    if not isinstance(explicit, Mapping):
        raise ConfigError("benchmark.<name>.<field> entries expected")
    for name in sorted(explicit):
        spec = explicit[name]
        if not isinstance(spec, Mapping):
            raise ConfigError(f"benchmark.{name} must be a section")
        expansion = _explicit_expansion(kernel, d, spec, name)
        link = spec.get("link", "direct" if leader.spec.family == FAMILY_QUADRATIC else "linked")
        try:
            if link == "direct":
                out.append(direct_benchmark(name, expansion))
            elif link == "linked":
                out.append(linked_benchmark(name, expansion, leader))
            else:
                raise ConfigError(f"benchmark.{name}: unknown link {link!r}")
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"benchmark.{name}: {exc}") from exc
    if bool(_get(cfg, "benchmarks.include_members", False)):
        members = getattr(kernel, "members_meta", None)
        if members is None:
            raise ConfigError("benchmarks.include_members needs kernel.type = universal")
        for j, (strategy, sup) in enumerate(members, start=1):
            out.append(
                declared_benchmark(
                    strategy.name, strategy, (2.0 ** j) * sup, leader.spec.family
                )
            )
    names = [b.name for b in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate benchmark names: {names}")
    return out


def build_generator_factory(
    cfg: Mapping, space: OutcomeSpace, d: int, seed: int, benchmarks: list
) -> Callable[[], object]:
    kind = _get(cfg, "generator.kind", required=True)
    if kind not in GENERATOR_KINDS:
        raise ConfigError(f"unknown generator.kind {kind!r}")
    params = {
        k: v
        for k, v in cfg.get("generator", {}).items()
        if k not in ("kind", "truth", "target")
    }
    gen_seed = int(np.random.SeedSequence([int(seed), 0]).generate_state(1, np.uint64)[0])
    by_name = {b.name: b.strategy for b in benchmarks}
    if kind == STOCHASTIC_TRUTH:
        truth_name = _get(cfg, "generator.truth", required=True)
        if truth_name not in by_name:
            raise ConfigError(f"generator.truth {truth_name!r} is not a benchmark name")
        params["truth"] = by_name[truth_name]
    if kind == ADVERSARIAL_SIGN:
        target = _get(cfg, "generator.target")
        if target is not None:
            if target not in by_name:
                raise ConfigError(f"generator.target {target!r} is not a benchmark name")
            params["target"] = target

    def factory():
        try:
            return make_generator(kind, space, d, gen_seed, **params)
        except TypeError as exc:
            raise ConfigError(f"bad generator parameters: {exc}") from exc

    factory()  # fail fast on bad parameters
    return factory


@dataclass
class Experiment:
    """A fully assembled, re-runnable single-trace experiment."""

    raw: dict
    space: OutcomeSpace
    d: int
    n_rounds: int
    seed: int
    kernel: SituationKernel
    leader_factory: Callable[[], Leader]
    generator_factory: Callable[[], object]
    benchmarks: list = field(default_factory=list)
    delta: float = 0.05
    runs: int = 0


def assemble(cfg: Mapping) -> Experiment:
    space = build_space(cfg)
    d = int(_get(cfg, "d", 1))
    if d < 1:
        raise ConfigError("d must be >= 1")
    n_rounds = int(_get(cfg, "n_rounds", required=True))
    if n_rounds < 1:
        raise ConfigError("n_rounds must be >= 1")
    seed = int(_get(cfg, "seed", required=True))
    kernel = build_kernel(cfg, space, d)
    leader_factory = build_leader_factory(cfg, kernel, space)
    try:
        probe = leader_factory()
    except Exception as exc:
        raise ConfigError(f"cannot build leader: {exc}") from exc
    benchmarks = build_benchmarks(cfg, kernel, space, d, probe, seed)
    generator_factory = build_generator_factory(cfg, space, d, seed, benchmarks)
    return Experiment(
        raw=dict(cfg),
        space=space,
        d=d,
        n_rounds=n_rounds,
        seed=seed,
        kernel=kernel,
        leader_factory=leader_factory,
        generator_factory=generator_factory,
        benchmarks=benchmarks,
        delta=float(_get(cfg, "delta", 0.05)),
        runs=int(_get(cfg, "runs", 0)),
    )
