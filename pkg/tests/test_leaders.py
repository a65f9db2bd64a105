import math

import numpy as np
import pytest

from conftest import ConstKernel, make_sit
from leadcast.generators import make_generator
from leadcast.kernels import KernelExpansion, rbf_window_kernel
from leadcast.leaders import (
    LeaderError,
    bregman_leader,
    declared_benchmark,
    direct_benchmark,
    linked_benchmark,
    logloss_leader,
    make_leader,
    quadratic_leader,
    scoring_leader,
)
from leadcast.losses import (
    BregmanLoss,
    LossError,
    brier,
    log_loss,
    negative_entropy_loss,
    quadratic_loss,
)
from leadcast.protocol import (
    FunctionStrategy,
    binary_space,
    interval_space,
    replay_predictions,
    run_protocol,
)

INTERVAL = interval_space(-1.0, 1.0)


def _rbf(space, k=1, gamma=0.5):
    return rbf_window_kernel(k, gamma, space)


def _leaders():
    return {
        "quadratic": quadratic_leader(1.0, _rbf(INTERVAL)),
        "bregman": bregman_leader(negative_entropy_loss(0.05), _rbf(interval_space(0.05, 0.95))),
        "scoring": scoring_leader(brier(), _rbf(binary_space())),
        "logloss": logloss_leader(_rbf(binary_space())),
    }


class TestFirstRound:
    def test_trivial_first_predictions(self):
        expect = {"quadratic": 0.0, "bregman": 0.5, "scoring": 0.5, "logloss": 0.5}
        for key, leader in _leaders().items():
            mu = leader.predict(make_sit([0.3]))
            assert mu == pytest.approx(expect[key], abs=1e-12), key


class TestPredictionRange:
    def _run(self, leader, kind="adversarial_sign", n=60, seed=13):
        gen = make_generator(kind, leader.spec.space, d=1, seed=seed)
        return run_protocol(gen, leader, {}, n)

    def test_quadratic_within_scale(self):
        leader = quadratic_leader(1.0, _rbf(INTERVAL))
        mus = self._run(leader).predictions()
        assert np.all(mus >= -1.0) and np.all(mus <= 1.0)

    def test_bregman_within_domain(self):
        leader = bregman_leader(negative_entropy_loss(0.05), _rbf(interval_space(0.05, 0.95)))
        gen = make_generator("iid_uniform", leader.spec.space, d=1, seed=5)
        mus = run_protocol(gen, leader, {}, 60).predictions()
        assert np.all(mus >= 0.05) and np.all(mus <= 0.95)

    def test_scoring_within_closed_band(self):
        leader = scoring_leader(brier(), _rbf(binary_space()), p_lo=0.05, p_hi=0.95)
        mus = self._run(leader).predictions()
        assert np.all(mus >= 0.05) and np.all(mus <= 0.95)

    def test_logloss_strictly_interior(self):
        leader = logloss_leader(_rbf(binary_space()))
        mus = self._run(leader, n=80).predictions()
        assert np.all(mus > 0.0) and np.all(mus < 1.0)

    def test_run_populates_diagnostics_every_round(self):
        leader = quadratic_leader(1.0, _rbf(INTERVAL))
        trace = self._run(leader, kind="iid_uniform", n=40)
        assert len(leader.diagnostics_rows()) == 40
        assert leader.state.n == 40
        assert leader.potential_sq <= leader.cum_budget + leader.cum_slack + 1e-9


class TestIncrementalConsistency:
    def test_replay_is_bit_identical(self):
        leader = quadratic_leader(1.0, _rbf(INTERVAL))
        gen = make_generator("ar1_clipped", INTERVAL, d=2, seed=21)
        trace = run_protocol(gen, leader, {}, 50)
        fresh = quadratic_leader(1.0, _rbf(INTERVAL))
        mus, _ = replay_predictions(trace, fresh, {})
        assert np.array_equal(mus, trace.predictions())

    def test_cold_rebuild_matches_recorded_round(self):
        leader = logloss_leader(_rbf(binary_space()))
        gen = make_generator("iid_uniform", binary_space(), d=1, seed=9)
        trace = run_protocol(gen, leader, {}, 30)
        cold = logloss_leader(_rbf(binary_space()))
        assert cold.predict(trace.situation_at(23)) == trace.predictions()[22]
        # jumping backwards forces another rebuild and still agrees
        assert cold.predict(trace.situation_at(7)) == trace.predictions()[6]

    def test_re_predict_same_situation_is_stable(self):
        leader = quadratic_leader(1.0, _rbf(INTERVAL))
        s = make_sit([0.4])
        mu1 = leader.predict(s)
        mu2 = leader.predict(s)
        assert mu1 == mu2
        assert leader.state.n == 0  # nothing absorbed yet

    def test_observe_settles_pending_round(self):
        leader = quadratic_leader(1.0, _rbf(INTERVAL))
        leader.predict(make_sit([0.4]))
        leader.observe(0.7)
        assert leader.state.n == 1
        assert leader.state.diagnostics[0]["mu"] == 0.0
        # a second observe without a pending decision is a no-op
        leader.observe(0.7)
        assert leader.state.n == 1


class TestFastpath:
    def test_bregman_fastpath_matches_grid(self):
        loss = negative_entropy_loss(0.05)
        no_inverse = BregmanLoss(
            name=loss.name,
            psi=loss.psi,
            psi_prime=loss.psi_prime,
            domain=loss.domain,
            psi_prime_sup=loss.psi_prime_sup,
            psi_prime_inverse=None,
        )
        space = interval_space(0.05, 0.95)
        fast = bregman_leader(loss, _rbf(space))
        slow = bregman_leader(no_inverse, _rbf(space))
        gen_f = make_generator("iid_uniform", space, d=1, seed=31)
        gen_s = make_generator("iid_uniform", space, d=1, seed=31)
        t_fast = run_protocol(gen_f, fast, {}, 40)
        t_slow = run_protocol(gen_s, slow, {}, 40)
        assert np.allclose(t_fast.predictions(), t_slow.predictions(), rtol=0, atol=1e-9)
        methods = {row["method"] for row in fast.diagnostics_rows()}
        assert "fastpath" in methods


class TestConstructors:
    def test_make_leader_dispatch(self):
        assert make_leader("quadratic", _rbf(INTERVAL), Y=2.0).spec.scale == 2.0
        loss = negative_entropy_loss(0.1)
        lb = make_leader("bregman", _rbf(interval_space(0.1, 0.9)), loss=loss)
        assert lb.spec.aux_norm == pytest.approx(math.log(9.0), rel=1e-15)
        ls = make_leader("scoring", _rbf(binary_space()), rule=brier(), p_lo=0.1, p_hi=0.9)
        assert ls.spec.prediction_interval == (0.1, 0.9, False)
        assert ls.name == "scoring_brier"
        ll = make_leader("logloss", _rbf(binary_space()))
        assert ll.spec.prediction_interval == (0.0, 1.0, True)
        with pytest.raises(LeaderError):
            make_leader("huber", _rbf(INTERVAL))

    def test_spec_constants(self):
        lq = quadratic_leader(2.0, _rbf(interval_space(-2, 2)))
        assert (lq.spec.scale, lq.spec.aux_norm) == (2.0, 2.0)
        assert lq.spec.hull == (-2.0, 2.0)
        loss = negative_entropy_loss(0.05)
        lb = bregman_leader(loss, _rbf(interval_space(0.05, 0.95)))
        assert lb.spec.scale == pytest.approx(0.9, rel=1e-15)
        assert lb.spec.aux_norm == pytest.approx(math.log(19.0), rel=1e-12)
        ls = scoring_leader(brier(), _rbf(binary_space()))
        assert ls.spec.aux_norm == pytest.approx(0.9, rel=1e-15)  # |1 - 2 * 0.05|
        ll = logloss_leader(_rbf(binary_space()))
        assert ll.spec.aux_norm == 1.0

    def test_invalid_arguments(self):
        with pytest.raises(LeaderError):
            quadratic_leader(0.0, _rbf(INTERVAL))
        with pytest.raises(LeaderError):
            scoring_leader(brier(), _rbf(binary_space()), p_lo=0.9, p_hi=0.1)
        bad = BregmanLoss(
            name="flat",
            psi=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
            psi_prime=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
            domain=(0.0, 1.0),
            psi_prime_sup=0.0,
        )
        with pytest.raises(LeaderError):
            bregman_leader(bad, _rbf(interval_space(0.0, 1.0)))


class TestBenchmarkLinks:
    def _expansion(self, norm):
        k = ConstKernel()
        return KernelExpansion(k, [make_sit([0.0])], [norm])

    def test_direct_norm(self):
        e = self._expansion(1.5)
        b = direct_benchmark("f", e)
        assert b.norm == pytest.approx(1.5, rel=1e-12)
        assert b.family == "quadratic"

    def test_declared_passthrough(self):
        strat = FunctionStrategy(lambda s: 0.1)
        b = declared_benchmark("m1", strat, 2.0, "quadratic")
        assert (b.name, b.norm, b.family) == ("m1", 2.0, "quadratic")
        assert b.strategy is strat

    def test_bregman_link_accepts_within_sup(self):
        leader = bregman_leader(negative_entropy_loss(0.05), ConstKernel())
        b = linked_benchmark("g", self._expansion(2.5), leader)
        # reach 2.5 <= ln 19 ~= 2.944: every linked value stays in the domain
        phi = b.strategy.predict(make_sit([0.0]))
        assert 0.05 <= phi <= 0.95
        assert b.norm == pytest.approx(2.5, rel=1e-12)

    def test_bregman_link_rejects_beyond_sup(self):
        leader = bregman_leader(negative_entropy_loss(0.05), ConstKernel())
        with pytest.raises(LeaderError, match="cannot certify"):
            linked_benchmark("g", self._expansion(3.5), leader)

    def test_bregman_link_needs_inverse(self):
        loss = negative_entropy_loss(0.05)
        no_inv = BregmanLoss(
            name=loss.name, psi=loss.psi, psi_prime=loss.psi_prime,
            domain=loss.domain, psi_prime_sup=loss.psi_prime_sup,
        )
        leader = bregman_leader(no_inv, ConstKernel())
        with pytest.raises(LossError):
            linked_benchmark("g", self._expansion(1.0), leader)

    def test_scoring_link_reach_certificate(self):
        leader = scoring_leader(brier(), ConstKernel(), p_lo=0.05, p_hi=0.95)
        ok = linked_benchmark("g", self._expansion(0.9), leader)
        assert 0.05 <= ok.strategy.predict(make_sit([0.0])) <= 0.95
        with pytest.raises(LeaderError, match="exposure range"):
            linked_benchmark("g", self._expansion(1.5), leader)

    def test_logloss_link_is_uncapped(self):
        leader = logloss_leader(ConstKernel())
        b = linked_benchmark("g", self._expansion(50.0), leader)
        phi = b.strategy.predict(make_sit([0.0]))
        assert 0.0 < phi < 1.0

    def test_quadratic_link_is_direct(self):
        leader = quadratic_leader(1.0, ConstKernel())
        b = linked_benchmark("g", self._expansion(0.5), leader)
        assert b.family == "quadratic"
        assert b.strategy.predict(make_sit([0.0])) == pytest.approx(0.5, rel=1e-12)
