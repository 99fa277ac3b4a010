import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflectmc.geometry import Volume
from reflectmc.sinkhorn import (
    EmpiricalDistribution,
    OtResult,
    SinkhornConfig,
    SinkhornConvergenceError,
    l1_cost_matrix,
    ot_eps,
    sinkhorn_divergence,
    transport_plan,
)
from reflectmc.sinkhorn import _solve_log, _solve_scaling


def cloud(points):
    return EmpiricalDistribution(np.asarray(points, dtype=float))


def brute_force_ot(A, B):
    """Exact unregularized transport for uniform weights on equal supports.

    With uniform weights and equal sizes the optimum is a permutation
    coupling; enumerate them all.
    """
    C = l1_cost_matrix(A, B)
    N = A.n_points
    best = np.inf
    for perm in itertools.permutations(range(N)):
        best = min(best, sum(C[i, perm[i]] for i in range(N)) / N)
    return best


class TestEmpiricalDistribution:
    def test_uniform_weights_default(self):
        d = cloud([[0.0], [1.0]])
        np.testing.assert_array_equal(d.weights, [0.5, 0.5])

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            EmpiricalDistribution(np.empty((0, 2)))
        with pytest.raises(ValueError):
            EmpiricalDistribution([[np.inf, 0.0]])
        with pytest.raises(ValueError):
            EmpiricalDistribution([[0.0]], weights=[2.0])
        with pytest.raises(ValueError):
            EmpiricalDistribution([[0.0], [1.0]], weights=[0.9, 0.2])


class TestCostMatrix:
    def test_identical_point(self):
        np.testing.assert_array_equal(l1_cost_matrix(cloud([[0, 0]]), cloud([[0, 0]])), [[0.0]])

    def test_coordinate_sum(self):
        np.testing.assert_array_equal(l1_cost_matrix(cloud([[0, 0]]), cloud([[1, 2]])), [[3.0]])

    def test_two_points(self):
        C = l1_cost_matrix(cloud([[0.0], [1.0]]), cloud([[0.0], [1.0]]))
        np.testing.assert_array_equal(C, [[0.0, 1.0], [1.0, 0.0]])

    def test_self_cost_symmetric_zero_diagonal(self):
        rng = np.random.default_rng(0)
        A = cloud(rng.normal(size=(20, 5)))
        C = l1_cost_matrix(A, A)
        np.testing.assert_array_equal(C, C.T)
        np.testing.assert_array_equal(np.diag(C), np.zeros(20))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            l1_cost_matrix(cloud([[0.0]]), cloud([[0.0, 1.0]]))


class TestOtEps:
    @pytest.mark.parametrize("eps", [1e-3, 4.0, 1e3])
    def test_dirac_pair_is_exact_cost(self, eps):
        # a one-point coupling is forced, so the KL term vanishes
        A, B = cloud([[0.0, 0.0]]), cloud([[1.0, 2.0]])
        res = ot_eps(A, B, SinkhornConfig(epsilon=eps))
        assert res.converged
        assert res.value == pytest.approx(3.0, abs=1e-9)

    def test_large_eps_plan_tends_to_product(self):
        rng = np.random.default_rng(1)
        A = cloud(rng.normal(size=(6, 2)))
        C = l1_cost_matrix(A, A)
        res = ot_eps(A, A, SinkhornConfig(epsilon=1e3))
        product_value = float(A.weights @ C @ A.weights)
        assert res.value == pytest.approx(product_value, rel=1e-2)

    @pytest.mark.parametrize("N", [2, 4, 6])
    def test_brute_force_permutation_oracle(self, N):
        # at eps=1e-3 the value settles within 1% of the exact assignment
        # long before the marginal tolerance is met; assert the value only
        rng = np.random.default_rng(N)
        A = cloud(rng.uniform(-1, 1, size=(N, 3)))
        B = cloud(rng.uniform(-1, 1, size=(N, 3)))
        exact = brute_force_ot(A, B)
        res = ot_eps(A, B, SinkhornConfig(epsilon=1e-3))
        assert res.marginal_violation < 1e-4
        assert res.value == pytest.approx(exact, rel=0.01)

    def test_plan_marginals_match_weights(self):
        rng = np.random.default_rng(2)
        A = cloud(rng.normal(size=(8, 3)))
        B = cloud(rng.normal(size=(12, 3)))
        config = SinkhornConfig()
        res = ot_eps(A, B, config)
        plan = transport_plan(A, B, config, res)
        assert np.abs(plan.sum(axis=1) - A.weights).sum() <= 2 * config.marginal_tolerance
        assert np.abs(plan.sum(axis=0) - B.weights).sum() <= 2 * config.marginal_tolerance
        assert plan.sum() == pytest.approx(1.0, abs=1e-9)

    def test_not_converged_flagged(self):
        rng = np.random.default_rng(3)
        A = cloud(rng.normal(size=(10, 2)))
        B = cloud(rng.normal(size=(10, 2)) + 5.0)
        res = ot_eps(A, B, SinkhornConfig(epsilon=1e-3, max_iterations=1))
        assert not res.converged
        assert res.iterations == 1

    def test_solver_paths_agree(self):
        rng = np.random.default_rng(4)
        A = cloud(rng.normal(size=(15, 4)))
        B = cloud(rng.normal(size=(11, 4)))
        C = l1_cost_matrix(A, B)
        fs, gs, _, _ = _solve_scaling(C, A.weights, B.weights, 4.0, 10_000, 1e-9, None)
        fl, gl, _, _ = _solve_log(C, A.weights, B.weights, 4.0, 10_000, 1e-9, None)
        vs = fs @ A.weights + gs @ B.weights
        vl = fl @ A.weights + gl @ B.weights
        assert vs == pytest.approx(vl, abs=1e-7)

    def test_warm_start_matches_cold(self):
        rng = np.random.default_rng(5)
        A = cloud(rng.normal(size=(10, 3)))
        B = cloud(rng.normal(size=(10, 3)))
        config = SinkhornConfig(marginal_tolerance=1e-9)
        cold = ot_eps(A, B, config)
        warm = ot_eps(A, B, config, initial_potentials=cold.potentials)
        assert warm.iterations <= cold.iterations
        assert warm.value == pytest.approx(cold.value, abs=1e-7)


class TestSinkhornDivergence:
    def test_self_divergence_is_zero(self):
        rng = np.random.default_rng(6)
        A = cloud(rng.normal(size=(30, 4)))
        C = l1_cost_matrix(A, A)
        assert abs(sinkhorn_divergence(A, A)) < 1e-8 * C.max()

    def test_dirac_pair_is_l1_distance(self):
        assert sinkhorn_divergence(cloud([[0, 0]]), cloud([[1, 2]])) == pytest.approx(3.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        A = cloud(rng.normal(size=(12, 3)))
        B = cloud(rng.uniform(-1, 1, size=(9, 3)))
        ab = sinkhorn_divergence(A, B)
        ba = sinkhorn_divergence(B, A)
        scale = l1_cost_matrix(A, B).max()
        assert abs(ab - ba) < 1e-10 * scale + 1e-9

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        A = cloud(rng.normal(size=(10, 3)))
        B = cloud(rng.normal(size=(10, 3)))
        v = np.array([0.5, -1.5, 2.0])
        shifted = sinkhorn_divergence(
            EmpiricalDistribution(A.points + v), EmpiricalDistribution(B.points + v)
        )
        assert shifted == pytest.approx(sinkhorn_divergence(A, B), abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(14, 2))
        A = cloud(pts)
        B = cloud(rng.normal(size=(14, 2)))
        perm = rng.permutation(14)
        assert sinkhorn_divergence(cloud(pts[perm]), B) == pytest.approx(
            sinkhorn_divergence(A, B), abs=1e-9
        )

    def test_dirac_separation_is_linear(self):
        d1 = sinkhorn_divergence(cloud([[0.0]]), cloud([[1.5]]))
        d2 = sinkhorn_divergence(cloud([[0.0]]), cloud([[3.0]]))
        assert d1 == pytest.approx(1.5, abs=1e-9)
        assert d2 == pytest.approx(2 * d1, abs=1e-9)

    def test_convergence_error_carries_value(self):
        rng = np.random.default_rng(10)
        A = cloud(rng.normal(size=(10, 2)))
        B = cloud(rng.normal(size=(10, 2)) + 4.0)
        with pytest.raises(SinkhornConvergenceError) as err:
            sinkhorn_divergence(A, B, SinkhornConfig(epsilon=1e-3, max_iterations=1))
        assert np.isfinite(err.value.value)

    def test_uniform_samples_floor(self):
        # two independent uniform clouds are near-indistinguishable at eps=4
        vol = Volume.ball(100)
        rng = np.random.default_rng(11)
        A = EmpiricalDistribution(vol.sample_uniform(rng, size=400))
        B = EmpiricalDistribution(vol.sample_uniform(rng, size=400))
        dirac = EmpiricalDistribution(np.tile(vol.sample_uniform(rng), (400, 1)))
        floor = sinkhorn_divergence(A, B)
        signal = sinkhorn_divergence(dirac, B)
        assert floor < 0.05 * signal

    def test_sample_efficiency_trend(self):
        # the floor between twin uniform clouds shrinks with sample size
        vol = Volume.ball(20)
        rng = np.random.default_rng(12)
        medians = {}
        for N in (200, 800):
            vals = []
            for _ in range(10):
                A = EmpiricalDistribution(vol.sample_uniform(rng, size=N))
                B = EmpiricalDistribution(vol.sample_uniform(rng, size=N))
                vals.append(sinkhorn_divergence(A, B))
            medians[N] = np.median(vals)
        assert medians[800] < medians[200]


class TestFuzzInvariants:
    def test_nonnegativity_fuzz(self):
        rng = np.random.default_rng(13)
        config = SinkhornConfig()
        floor = -10 * config.marginal_tolerance
        for _ in range(200):
            n = rng.integers(1, 4)
            A = cloud(rng.normal(size=(rng.integers(1, 12), n)))
            B = cloud(rng.normal(size=(rng.integers(1, 12), n)))
            assert sinkhorn_divergence(A, B, config) >= floor

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(2, 6),
        st.integers(1, 3),
        st.integers(0, 2**31 - 1),
        st.floats(-3.0, 3.0),
    )
    def test_translation_invariance_property(self, N, n, seed, shift):
        rng = np.random.default_rng(seed)
        A = cloud(rng.normal(size=(N, n)))
        B = cloud(rng.normal(size=(N, n)))
        base = sinkhorn_divergence(A, B)
        moved = sinkhorn_divergence(
            EmpiricalDistribution(A.points + shift),
            EmpiricalDistribution(B.points + shift),
        )
        assert moved == pytest.approx(base, abs=1e-8)
