"""Tests for measurement maps, sampling operators, coherence and the tangent projector."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lowrank_recovery import sensing as sn
from lowrank_recovery.linalg_core import svd
from lowrank_recovery.rng import RngStream


def random_orthonormal_basis(rng, n):
    q, _ = np.linalg.qr(rng.normal((n * n, n * n)))
    return sn.OperatorBasis.explicit(q.T.reshape(n * n, n, n))


class TestGaussianMap:
    def test_deterministic(self):
        a = sn.gaussian_map_new(RngStream(1), 4, 3, 2)
        b = sn.gaussian_map_new(RngStream(1), 4, 3, 2)
        np.testing.assert_array_equal(a.mats, b.mats)

    def test_scalar_measurement(self):
        g = sn.gaussian_map_new(RngStream(2), 1, 3, 3)
        assert sn.apply_map(g, np.eye(3)).shape == (1,)

    def test_entry_variance(self):
        m = 50
        g = sn.gaussian_map_new(RngStream(3), m, 20, 20)
        sq = g.mats.ravel() ** 2
        # mean of chi-square(1)/m entries, sd sqrt(2)/m per entry
        assert abs(sq.mean() - 1 / m) <= 3 * math.sqrt(2) / m / math.sqrt(sq.size)

    def test_zero_and_linearity(self):
        rng = RngStream(4)
        g = sn.gaussian_map_new(rng, 6, 3, 4)
        a, b = rng.normal((3, 4)), rng.normal((3, 4))
        np.testing.assert_array_equal(sn.apply_map(g, np.zeros((3, 4))), np.zeros(6))
        np.testing.assert_allclose(sn.apply_map(g, a + b), sn.apply_map(g, a) + sn.apply_map(g, b), atol=1e-12)

    def test_inner_products(self):
        rng = RngStream(5)
        g = sn.gaussian_map_new(rng, 3, 2, 2)
        a = rng.normal((2, 2))
        expected = [np.sum(x * a) for x in g.mats]
        np.testing.assert_allclose(sn.apply_map(g, a), expected, rtol=1e-14)

    def test_shape_mismatch(self):
        g = sn.gaussian_map_new(RngStream(0), 2, 2, 2)
        with pytest.raises(ValueError):
            sn.apply_map(g, np.eye(3))

    def test_expected_isometry(self):
        rng = RngStream(6)
        a = rng.normal((3, 4))
        a /= np.linalg.norm(a)
        vals = [np.sum(sn.apply_map(sn.gaussian_map_new(rng, 20, 3, 4), a) ** 2) for _ in range(1000)]
        assert np.mean(vals) == pytest.approx(1.0, rel=0.05)

    def test_json_round_trip(self):
        g = sn.gaussian_map_new(RngStream(7, 2), 5, 2, 3)
        back = sn.GaussianMap.from_json(g.to_json())
        np.testing.assert_array_equal(back.mats, g.mats)


class TestFixedVectorIsometry:
    def test_bound_values(self):
        assert sn.fixed_vector_isometry_bound(100, 0.5) == pytest.approx(2 * math.exp(-50 * (0.125 - 1 / 24)))
        assert sn.fixed_vector_isometry_bound(120, 1 - 1e-9) == pytest.approx(2 * math.exp(-120 / 12), rel=1e-6)

    def test_below_bound(self):
        rep = sn.fixed_vector_isometry_experiment(100, 5, 20_000, [0.2, 0.3, 0.5], RngStream(8))
        assert rep.holds()

    def test_rotation_invariance(self):
        rng = RngStream(9)
        x = rng.normal(6)
        a = sn.fixed_vector_isometry_experiment(20, 6, 5000, [0.5], RngStream(10))
        b = sn.fixed_vector_isometry_experiment(20, 6, 5000, [0.5], RngStream(11), x=x)
        assert stats.ks_2samp(a.meta["deviations"], b.meta["deviations"]).pvalue > 1e-3

    def test_threshold_domain(self):
        with pytest.raises(ValueError):
            sn.fixed_vector_isometry_experiment(5, 2, 10, [1.0], RngStream(0))


class TestOperatorBasis:
    def test_entry_element(self):
        np.testing.assert_array_equal(sn.entry_basis_element(2, 0, 1), [[0, 1], [0, 0]])
        with pytest.raises(ValueError):
            sn.entry_basis_element(2, 2, 0)

    def test_entry_orthonormal(self):
        b = sn.OperatorBasis.entry(3)
        s = b.stack().reshape(9, 9)
        np.testing.assert_array_equal(s @ s.T, np.eye(9))

    def test_entry_picks_entry(self):
        a = RngStream(1).normal((3, 3))
        b = sn.OperatorBasis.entry(3)
        for idx in range(9):
            k, l = divmod(idx, 3)
            assert np.sum(b.element(idx) * a) == a[k, l]

    def test_explicit_checked(self):
        with pytest.raises(ValueError, match="orthonormal"):
            sn.OperatorBasis.explicit(2 * np.eye(4).reshape(4, 2, 2))

    def test_coefficients_synthesize(self):
        rng = RngStream(2)
        b = random_orthonormal_basis(rng, 3)
        z = rng.normal((3, 3))
        np.testing.assert_allclose(b.synthesize(b.coefficients(z)), z, atol=1e-12)


class TestSampling:
    def test_full_without_replacement(self):
        idx = sn.sample_indices(RngStream(3), 16, 16, replacement=False)
        assert sorted(idx) == list(range(16))

    def test_too_many_distinct(self):
        with pytest.raises(ValueError):
            sn.sample_indices(RngStream(3), 4, 5, replacement=False)

    def test_collisions(self):
        rng = RngStream(4)
        hits = [np.unique(sn.sample_indices(rng, 25, 50, True)).size < 50 for _ in range(200)]
        assert all(hits)

    def test_deterministic(self):
        np.testing.assert_array_equal(sn.sample_indices(RngStream(5), 100, 10, True),
                                      sn.sample_indices(RngStream(5), 100, 10, True))

    def test_full_sampling_is_identity(self):
        rng = RngStream(6)
        for basis in (sn.OperatorBasis.entry(3), random_orthonormal_basis(rng, 3)):
            op = sn.SamplingOperator(basis, np.arange(9), replacement=False)
            z = rng.normal((3, 3))
            np.testing.assert_allclose(sn.sampling_apply(op, z), z, atol=1e-12)
            np.testing.assert_array_equal(sn.sampling_apply(op, np.zeros((3, 3))), np.zeros((3, 3)))

    def test_entry_formula(self):
        op = sn.SamplingOperator(sn.OperatorBasis.entry(2), np.array([0, 0, 3]))
        z = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_allclose(sn.sampling_apply(op, z), 4 / 3 * np.array([[2.0, 0.0], [0.0, 4.0]]))

    def test_unbiased(self):
        rng = RngStream(7)
        n = 10
        z = rng.normal((n, n))
        basis = sn.OperatorBasis.entry(n)
        acc = np.zeros((n, n))
        # relative error ~ sqrt((n^2/m - 1) / draws) ~ 0.01 at m = n^2
        for _ in range(10_000):
            acc += sn.sampling_apply(sn.sampling_operator_new(basis, n * n, rng), z)
        assert np.linalg.norm(acc / 10_000 - z) <= 0.02 * np.linalg.norm(z)

    def test_self_adjoint_psd(self):
        rng = RngStream(8)
        for basis in (sn.OperatorBasis.entry(4), random_orthonormal_basis(rng, 4)):
            op = sn.sampling_operator_new(basis, 30, rng)
            for _ in range(20):
                z, w = rng.normal((4, 4)), rng.normal((4, 4))
                lhs = np.sum(sn.sampling_apply(op, z) * w)
                rhs = np.sum(z * sn.sampling_apply(op, w))
                assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
                assert np.sum(sn.sampling_apply(op, z) * z) >= -1e-10

    def test_rough_norm_bound(self):
        rng = RngStream(9)
        n = 5
        op = sn.sampling_operator_new(sn.OperatorBasis.entry(n), 3, rng)
        for _ in range(50):
            z = rng.normal((n, n))
            assert np.linalg.norm(sn.sampling_apply(op, z)) <= n * n * np.linalg.norm(z)

    def test_index_range(self):
        with pytest.raises(ValueError):
            sn.SamplingOperator(sn.OperatorBasis.entry(2), np.array([4]))
        with pytest.raises(ValueError):
            sn.SamplingOperator(sn.OperatorBasis.entry(2), np.array([1, 1]), replacement=False)

    def test_json_round_trip(self):
        op = sn.sampling_operator_new(sn.OperatorBasis.entry(3), 5, RngStream(10))
        d = json.loads(op.to_json())
        assert set(d) == {"n", "m", "replacement", "omegas", "basis"}
        back = sn.SamplingOperator.from_json(op.to_json())
        np.testing.assert_array_equal(back.omegas, op.omegas)


class TestTangentProjector:
    def setup_method(self):
        rng = RngStream(11)
        self.n, self.r = 6, 2
        self.a = sn.incoherent_psd(rng, self.n, self.r)
        self.p = sn.TangentProjector.from_matrix(self.a)
        self.rng = rng

    def test_dimension(self):
        assert self.p.dim == 2 * self.r * self.n - self.r ** 2
        b = self.p.vec_basis()
        np.testing.assert_allclose(b.T @ b, np.eye(self.p.dim), atol=1e-12)

    def test_fixed_point_and_idempotent(self):
        z0 = self.rng.normal((self.n, self.n))
        pu = self.p.projector
        z = pu @ z0 + z0 @ pu - pu @ z0 @ pu
        np.testing.assert_allclose(sn.tangent_project(self.p, z), z, atol=1e-12)
        once = sn.tangent_project(self.p, z0)
        np.testing.assert_allclose(sn.tangent_project(self.p, once), once, atol=1e-10)

    def test_complement(self):
        z = self.rng.normal((self.n, self.n))
        pc = np.eye(self.n) - self.p.projector
        np.testing.assert_allclose(sn.tangent_complement(self.p, z), pc @ z @ pc, atol=1e-12)
        np.testing.assert_allclose(sn.tangent_project(self.p, z) + sn.tangent_complement(self.p, z), z, atol=1e-14)

    def test_full_space_is_identity(self):
        p = sn.TangentProjector(np.eye(4))
        z = self.rng.normal((4, 4))
        np.testing.assert_allclose(sn.tangent_project(p, z), z, atol=1e-14)

    def test_rank_at_most_2r(self):
        for _ in range(100):
            z = self.rng.normal((self.n, self.n))
            assert svd(sn.tangent_project(self.p, z)).numerical_rank <= 2 * self.r

    def test_vec_basis_spans_range(self):
        z = self.rng.normal((self.n, self.n))
        b = self.p.vec_basis()
        via_basis = (b @ (b.T @ z.ravel())).reshape(self.n, self.n)
        np.testing.assert_allclose(via_basis, sn.tangent_project(self.p, z), atol=1e-12)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            sn.TangentProjector(np.ones((3, 1)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sn.tangent_project(self.p, np.eye(3))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
    def test_projection_properties(self, n, seed):
        rng = RngStream(seed)
        r = 1 + seed % n
        p = sn.TangentProjector.from_matrix(sn.incoherent_psd(rng, n, r))
        z, w = rng.normal((n, n)), rng.normal((n, n))
        pz = sn.tangent_project(p, z)
        # self-adjoint and idempotent
        assert np.sum(pz * w) == pytest.approx(np.sum(z * sn.tangent_project(p, w)), abs=1e-9)
        np.testing.assert_allclose(sn.tangent_project(p, pz), pz, atol=1e-10)


class TestCoherence:
    def test_entry_nu_basis(self):
        a = sn.incoherent_psd(RngStream(0), 5, 1)
        assert sn.coherence(sn.OperatorBasis.entry(5), a).nu_basis == 5.0

    def test_all_ones_incoherent(self):
        n = 8
        u = np.ones(n) / math.sqrt(n)
        rep = sn.coherence(sn.OperatorBasis.entry(n), np.outer(u, u))
        assert rep.mu1 == pytest.approx(1.0)
        assert rep.mu2 == pytest.approx(1.0)
        assert rep.nu == pytest.approx(1.0)

    def test_spiked(self):
        n = 8
        a = np.zeros((n, n))
        a[0, 0] = 1.0
        rep = sn.coherence(sn.OperatorBasis.entry(n), a)
        assert rep.mu1 == pytest.approx(n)

    def test_closed_form_matches_direct(self):
        rng = RngStream(12)
        n, r = 5, 2
        g = rng.normal((n, r))
        a = g @ g.T
        p = sn.TangentProjector.from_matrix(a)
        rep = sn.coherence(sn.OperatorBasis.entry(n), a, p)
        direct = max(np.sum(sn.tangent_project(p, sn.entry_basis_element(n, i, j)) ** 2)
                     for i in range(n) for j in range(n))
        assert rep.max_tangent_sq == pytest.approx(direct, rel=1e-12)
        assert direct <= 2 * rep.mu1 * r / n + 1e-12

    def test_basis_implication(self):
        rng = RngStream(13)
        n, r = 4, 1
        basis = random_orthonormal_basis(rng, n)
        a = sn.incoherent_psd(rng, n, r)
        rep = sn.coherence(basis, a)
        assert rep.max_tangent_sq <= 2 * r * rep.max_basis_opnorm_sq + 1e-12
        assert rep.mu1 is None and rep.nu_entry is None


class TestRip:
    def test_orthonormal_columns(self):
        q, _ = np.linalg.qr(RngStream(14).normal((10, 4)))
        assert sn.sparse_rip_constant(q, 3) == pytest.approx(0.0, abs=1e-12)

    def test_duplicated_column(self):
        e = np.zeros((3, 2))
        e[0] = 1.0
        assert sn.sparse_rip_constant(e, 2) == pytest.approx(1.0)

    def test_matches_brute_force(self):
        import itertools

        a = RngStream(15).normal((8, 6)) / math.sqrt(8)
        best = 0.0
        for s in itertools.combinations(range(6), 3):
            lam = np.linalg.eigvalsh(a[:, s].T @ a[:, s])
            best = max(best, lam[-1] - 1, 1 - lam[0])
        assert sn.sparse_rip_constant(a, 3) == pytest.approx(best, rel=1e-12)

    def test_enumeration_guard(self):
        with pytest.raises(ValueError):
            sn.sparse_rip_constant(np.eye(40), 10, max_supports=1000)

    def test_orthonormal_map_exact_isometry(self):
        g = sn.orthonormal_measurement_map(2, 3, RngStream(16))
        assert sn.matrix_rip_estimate(g, 1, 200, RngStream(17), use_net=False) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_probes(self):
        g = sn.gaussian_map_new(RngStream(18), 30, 3, 3)
        small = sn.matrix_rip_estimate(g, 1, 100, RngStream(19), use_net=False)
        large = sn.matrix_rip_estimate(g, 1, 1000, RngStream(19), use_net=False)
        assert large >= small

    def test_desk_constant_estimate(self):
        n = N = 6
        m = sn.rip_sample_count(n, N, 1)
        ok = 0
        for seed in range(50):
            rng = RngStream(seed)
            g = sn.gaussian_map_new(rng, m, n, N)
            ok += sn.matrix_rip_estimate(g, 1, 200, rng.fork(1), use_net=False) <= 0.6
        assert ok >= 45

    def test_net_route_on_tiny_dims(self):
        g = sn.gaussian_map_new(RngStream(20), 40, 1, 1)
        est = sn.matrix_rip_estimate(g, 1, 10, RngStream(21), use_net=True)
        assert est == pytest.approx(abs(np.sum(g.matrix ** 2) - 1.0), rel=1e-12)
