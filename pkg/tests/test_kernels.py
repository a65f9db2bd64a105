import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import IndefiniteKernel, make_sit
from leadcast.generators import random_situations
from leadcast.kernels import (
    KernelError,
    KernelExpansion,
    TruncatedUniversalKernel,
    embedding_constant_estimate,
    expansion_norm,
    gram,
    linear_window_kernel,
    rbf_window_kernel,
    scaled_to_norm,
    truncated_universal_kernel,
    window_vector,
)
from leadcast.protocol import FunctionStrategy, interval_space

SPACE = interval_space(-1.0, 1.0)


class TestWindowVector:
    def test_front_padding_with_sentinel(self):
        s = make_sit([0.7], history=[([0.5], 0.25)])
        v = window_vector(s, 2, SPACE)
        pad = SPACE.sentinel()
        assert v.tolist() == [pad, pad, 0.5, 0.25, 0.7]

    def test_full_window_keeps_order(self):
        s = make_sit([0.9], history=[([0.1], 0.2), ([0.3], 0.4), ([0.5], 0.6)])
        v = window_vector(s, 2, SPACE)
        assert v.tolist() == [0.3, 0.4, 0.5, 0.6, 0.9]

    def test_k_zero_is_current_only(self):
        s = make_sit([0.1, -0.2], history=[([0.0, 0.0], 0.5)])
        assert window_vector(s, 0, SPACE).tolist() == [0.1, -0.2]


class TestRBF:
    def test_pair_value(self):
        k = rbf_window_kernel(0, 1.0, SPACE)
        a, b = make_sit([0.0]), make_sit([0.5])
        assert k.eval(a, b) == pytest.approx(math.exp(-0.25), rel=1e-15)
        assert k.diag(a) == 1.0

    def test_gamma_must_be_positive(self):
        with pytest.raises(KernelError):
            rbf_window_kernel(1, 0.0, SPACE)

    def test_column_matches_pair_loop(self, rng):
        k = rbf_window_kernel(1, 0.7, SPACE)
        sits = random_situations(rng, SPACE, 2, 12)
        feats = np.vstack([k.feature(s) for s in sits])
        f = k.feature(sits[0])
        loop = np.array([k.pair(row, f) for row in feats])
        assert np.allclose(k.column(feats, f), loop, rtol=0, atol=1e-15)


class TestLinear:
    def test_pair_is_dot_product(self):
        k = linear_window_kernel(0, SPACE, bound=10.0)
        a, b = make_sit([1.0, 2.0]), make_sit([3.0, -1.0])
        assert k.eval(a, b) == 1.0
        assert k.diag(a) == 5.0

    def test_estimate_below_sqrt_dim_bound(self, rng):
        d = 3
        k = linear_window_kernel(1, SPACE, bound=10.0)
        sits = random_situations(rng, SPACE, d, 40)
        est = embedding_constant_estimate(k, sits)
        dim = 1 * (d + 1) + d
        max_coord = max(abs(SPACE.sentinel()), 1.0)
        assert est <= math.sqrt(dim) * max_coord + 1e-12


class TestGram:
    def test_single_and_duplicate(self):
        k = rbf_window_kernel(0, 1.0, SPACE)
        s = make_sit([0.3])
        assert gram(k, [s]).tolist() == [[1.0]]
        assert gram(k, [s, s]).tolist() == [[1.0, 1.0], [1.0, 1.0]]

    def test_matches_brute_pairwise(self, rng):
        k = rbf_window_kernel(1, 0.5, SPACE)
        sits = random_situations(rng, SPACE, 2, 8)
        g = gram(k, sits)
        for i in range(8):
            for j in range(8):
                assert g[i, j] == pytest.approx(k.eval(sits[i], sits[j]), abs=1e-15)
        assert np.array_equal(g, g.T)

    def test_psd_on_samples(self, rng):
        # eigenvalue oracle: a PSD kernel's Gram matrix has no negative
        # eigenvalues beyond floating noise
        for k in (
            rbf_window_kernel(2, 0.8, SPACE),
            linear_window_kernel(1, SPACE, bound=10.0),
        ):
            sits = random_situations(rng, SPACE, 2, 50)
            eigs = np.linalg.eigvalsh(gram(k, sits))
            assert eigs.min() >= -1e-8

    def test_cauchy_schwarz(self, rng):
        k = rbf_window_kernel(1, 1.3, SPACE)
        sits = random_situations(rng, SPACE, 3, 20)
        for s in sits[:10]:
            for t in sits[10:]:
                assert abs(k.eval(s, t)) <= math.sqrt(k.diag(s) * k.diag(t)) + 1e-12


class TestExpansionNorm:
    def test_zero_and_single_center(self):
        k = rbf_window_kernel(0, 1.0, SPACE)
        assert expansion_norm(KernelExpansion(k, [], [])) == 0.0
        e = KernelExpansion(k, [make_sit([0.2])], [2.0])
        assert expansion_norm(e) == pytest.approx(2.0, rel=1e-15)

    def test_two_center_hand_value(self):
        # centers 0 and sqrt(ln 2) with gamma 1 give Gram [[1, 1/2], [1/2, 1]];
        # coeffs (1, -1) then have norm^2 = 1 + 1 - 2/2 = 1
        k = rbf_window_kernel(0, 1.0, SPACE)
        e = KernelExpansion(k, [make_sit([0.0]), make_sit([math.sqrt(math.log(2.0))])], [1.0, -1.0])
        g = e.gram_matrix()
        assert g[0, 1] == pytest.approx(0.5, rel=1e-12)
        assert expansion_norm(e) == pytest.approx(1.0, rel=1e-12)

    def test_length_mismatch(self):
        k = rbf_window_kernel(0, 1.0, SPACE)
        with pytest.raises(KernelError):
            KernelExpansion(k, [make_sit([0.0])], [1.0, 2.0])

    def test_indefinite_kernel_rejected(self):
        k = IndefiniteKernel()
        e = KernelExpansion(k, [make_sit([0.0]), make_sit([1.0])], [1.0, 1.0])
        with pytest.raises(KernelError):
            expansion_norm(e)

    @settings(max_examples=50, deadline=None)
    @given(t=st.floats(min_value=-8.0, max_value=8.0, allow_nan=False))
    def test_homogeneous_in_coeffs(self, t):
        k = rbf_window_kernel(0, 1.0, SPACE)
        centers = [make_sit([0.1]), make_sit([-0.4])]
        base = KernelExpansion(k, centers, [0.7, -0.3])
        scaled = KernelExpansion(k, centers, np.array([0.7, -0.3]) * t)
        assert expansion_norm(scaled) == pytest.approx(
            abs(t) * expansion_norm(base), rel=1e-10, abs=1e-12
        )

    def test_scaled_to_norm(self, rng):
        k = rbf_window_kernel(1, 0.5, SPACE)
        sits = random_situations(rng, SPACE, 2, 5)
        e = KernelExpansion(k, sits, rng.standard_normal(5))
        out = scaled_to_norm(e, 2.5)
        assert expansion_norm(out) == pytest.approx(2.5, rel=1e-12)
        zero = KernelExpansion(k, sits, np.zeros(5))
        assert scaled_to_norm(zero, 0.0) is zero
        with pytest.raises(KernelError):
            scaled_to_norm(zero, 1.0)


class TestTruncatedUniversal:
    def _members(self, m):
        out = []
        for j in range(m):
            coef = 0.5 + 0.25 * j
            out.append((FunctionStrategy(lambda s, c=coef: c * float(s.current[0])), 1.0))
        return out

    def test_eval_is_sum_of_member_contributions(self):
        k = truncated_universal_kernel(self._members(4))
        s, t = make_sit([0.8]), make_sit([-0.6])
        total = sum(k.member_contribution(slot, s, t) for slot in range(1, 5))
        assert k.eval(s, t) == pytest.approx(total, rel=1e-14)

    def test_none_slot_keeps_weight_scheme(self):
        base = self._members(3)
        k = truncated_universal_kernel([base[0], None, base[2]])
        s, t = make_sit([0.5]), make_sit([0.9])
        assert k.member_contribution(2, s, t) == 0.0
        assert k.member_norm_bound(2) == 0.0
        # slot 3 keeps its own 4^-3 weight even though slot 2 is vacant
        full = truncated_universal_kernel(base)
        assert k.member_contribution(3, s, t) == full.member_contribution(3, s, t)

    def test_member_norm_bound(self):
        k = truncated_universal_kernel([(FunctionStrategy(lambda s: 0.3), 0.5)] * 3)
        assert k.member_norm_bound(1) == 1.0  # 2^1 * 0.5
        assert k.member_norm_bound(3) == 4.0  # 2^3 * 0.5

    def test_nonpositive_sup_rejected(self):
        with pytest.raises(KernelError):
            truncated_universal_kernel([(FunctionStrategy(lambda s: 0.0), 0.0)])

    def test_embedding_bound_m3_frozen(self):
        k = truncated_universal_kernel(self._members(3))
        assert k.embedding_constant_bound == pytest.approx(0.57282196186948, abs=1e-12)

    def test_embedding_bound_below_limit(self):
        limit = 1.0 / math.sqrt(3.0)
        bounds = [
            truncated_universal_kernel(self._members(m)).embedding_constant_bound
            for m in range(1, 9)
        ]
        assert all(b < limit for b in bounds)
        assert bounds == sorted(bounds)
        assert limit - bounds[-1] < 1e-4

    def test_estimate_respects_declared_bound(self, rng):
        members = [
            (FunctionStrategy(lambda s, c=c: math.tanh(c * float(np.sum(s.current)))), 1.0)
            for c in (0.8, 1.1, 1.7)
        ]
        k = truncated_universal_kernel(members)
        sits = random_situations(rng, SPACE, 2, 60)
        assert embedding_constant_estimate(k, sits) <= k.embedding_constant_bound + 1e-12


class TestEmbeddingEstimate:
    def test_rbf_is_exactly_one(self, rng):
        k = rbf_window_kernel(1, 2.0, SPACE)
        sits = random_situations(rng, SPACE, 2, 10)
        assert embedding_constant_estimate(k, sits) == 1.0
