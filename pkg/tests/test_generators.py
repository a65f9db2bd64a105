import numpy as np
import pytest

from leadcast.generators import (
    GENERATOR_KINDS,
    AdversarialSign,
    StochasticTruth,
    make_generator,
    random_situations,
)
from leadcast.protocol import (
    FunctionStrategy,
    ProtocolError,
    binary_space,
    interval_space,
    run_protocol,
)

SPACE = interval_space(-1.0, 1.0)
BIN = binary_space()


def _run(gen, leader_value=0.0, benchmarks=None, n=50):
    leader = FunctionStrategy(lambda s: leader_value)
    return run_protocol(gen, leader, benchmarks or {}, n)


class TestInSpace:
    @pytest.mark.parametrize("kind", GENERATOR_KINDS)
    @pytest.mark.parametrize("space", [SPACE, BIN], ids=["interval", "binary"])
    def test_outcomes_stay_in_space(self, kind, space):
        params = {}
        benchmarks = {}
        if kind == "stochastic_truth":
            mid = space.midpoint() if space.kind == "interval" else 0.5
            params["truth"] = FunctionStrategy(lambda s: mid)
        gen = make_generator(kind, space, d=2, seed=7, **params)
        trace = _run(gen, leader_value=0.25, benchmarks=benchmarks, n=60)
        assert all(space.contains(r.y) for r in trace.rounds)
        assert all(r.x.shape == (2,) for r in trace.rounds)

    def test_binary_kinds_emit_only_zero_one(self):
        for kind in ("iid_uniform", "ar1_clipped", "sinusoid"):
            gen = make_generator(kind, BIN, d=1, seed=3)
            ys = set(_run(gen, leader_value=0.5, n=80).outcomes().tolist())
            assert ys <= {0.0, 1.0}

    def test_unknown_kind(self):
        with pytest.raises(ProtocolError):
            make_generator("weather", SPACE, d=1, seed=0)


class TestDeterminism:
    @pytest.mark.parametrize("kind", ["iid_uniform", "ar1_clipped", "sinusoid"])
    def test_same_seed_same_stream(self, kind):
        t1 = _run(make_generator(kind, SPACE, d=2, seed=11), n=30)
        t2 = _run(make_generator(kind, SPACE, d=2, seed=11), n=30)
        assert np.array_equal(t1.outcomes(), t2.outcomes())
        assert all(np.array_equal(a.x, b.x) for a, b in zip(t1.rounds, t2.rounds))

    def test_different_seed_differs(self):
        t1 = _run(make_generator("iid_uniform", SPACE, d=1, seed=1), n=30)
        t2 = _run(make_generator("iid_uniform", SPACE, d=1, seed=2), n=30)
        assert not np.array_equal(t1.outcomes(), t2.outcomes())


class TestAdversarial:
    def test_reacts_to_leader(self):
        gen = AdversarialSign(SPACE, d=1, seed=0)
        trace = _run(gen, leader_value=-0.5, n=10)
        assert trace.outcomes().tolist() == [1.0] * 10
        gen = AdversarialSign(SPACE, d=1, seed=0)
        trace = _run(gen, leader_value=0.5, n=10)
        assert trace.outcomes().tolist() == [-1.0] * 10

    def test_reacts_to_named_benchmark(self):
        gen = AdversarialSign(SPACE, d=1, seed=0, target="b")
        bench = {"b": FunctionStrategy(lambda s: 0.9)}
        # leader sits below midpoint, target above: outcome follows the target
        trace = _run(gen, leader_value=-0.9, benchmarks=bench, n=10)
        assert trace.outcomes().tolist() == [-1.0] * 10


class TestStochasticTruth:
    def test_noise_is_bounded_and_centred(self):
        truth = FunctionStrategy(lambda s: 0.7)
        gen = StochasticTruth(SPACE, d=1, seed=5, truth=truth, amplitude=0.25)
        trace = _run(gen, n=4000)
        xi = trace.outcomes() - 0.7
        assert np.max(np.abs(xi)) <= 0.25 + 1e-12
        assert abs(xi.mean()) < 0.02

    def test_amplitude_shrinks_near_boundary(self):
        truth = FunctionStrategy(lambda s: 0.95)
        gen = StochasticTruth(SPACE, d=1, seed=5, truth=truth, amplitude=0.25)
        ys = _run(gen, n=500).outcomes()
        assert ys.min() >= 0.9 - 1e-12 and ys.max() <= 1.0 + 1e-12

    def test_binary_matches_bernoulli_rate(self):
        truth = FunctionStrategy(lambda s: 0.8)
        gen = StochasticTruth(BIN, d=1, seed=9, truth=truth)
        ys = _run(gen, n=4000).outcomes()
        assert abs(ys.mean() - 0.8) < 0.03

    def test_out_of_space_truth_aborts(self):
        truth = FunctionStrategy(lambda s: 1.5)
        gen = StochasticTruth(SPACE, d=1, seed=0, truth=truth)
        with pytest.raises(ProtocolError):
            _run(gen, n=1)


class TestRandomSituations:
    def test_shapes_and_history(self, rng):
        sits = random_situations(rng, SPACE, d=3, count=25)
        assert len(sits) == 25
        for s in sits:
            assert s.current.shape == (3,)
            assert len(s.history) <= 3
            for x, y in s.history:
                assert x.shape == (3,)
                assert SPACE.contains(y)

    def test_binary_histories_are_binary(self, rng):
        sits = random_situations(rng, BIN, d=1, count=25)
        for s in sits:
            for _, y in s.history:
                assert y in (0.0, 1.0)
