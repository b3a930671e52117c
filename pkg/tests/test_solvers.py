import numpy as np
import pytest

from mvkc.data import KernelMatrix, MultiViewDataset, ViewMask, apply_mask
from mvkc.harness import are
from mvkc.solvers import (
    SolverConfig,
    basis_set,
    embd_smooth_grad,
    embd_smooth_value,
    fit,
    fit_app,
    fit_embd_hm,
    fit_embd_ht,
    fit_sdp,
    hm_smooth_grad,
    hm_smooth_value,
    l21_norm,
    loss_between_kernels,
    loss_between_weights,
    loss_within,
    reconstruct_kernel,
    sdp_smooth_grad,
    sdp_smooth_value,
)
from mvkc.synthetic import MissingnessPlan, ToyRecipe, generate_toy, induce_missing

from conftest import random_masked_dataset
from oracles import central_difference_grad


def two_identical_views(n=10, missing_point=9, seed=0):
    """Two copies of one linear kernel whose last point lies in the span of
    the others; the point is hidden from the first view only."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5))
    X[missing_point] = 0.5 * X[0] + 0.3 * X[1] + 0.2 * X[2]
    K = KernelMatrix(X @ X.T)
    mask0 = ViewMask(n, tuple(i for i in range(n) if i != missing_point))
    mask1 = ViewMask.full(n)
    return MultiViewDataset(
        kernels=(apply_mask(K, mask0), apply_mask(K, mask1)),
        masks=(mask0, mask1),
        truth=(K, K),
    )


class TestReconstruct:
    def test_identity_weights_reproduce_kernel(self, rng):
        X = rng.normal(size=(5, 3))
        K = KernelMatrix(X @ X.T)
        mask = ViewMask.full(5)
        out = reconstruct_kernel(np.eye(5), K, mask)
        assert np.allclose(out.values, K.values)

    def test_zero_weights(self):
        K = KernelMatrix(np.eye(3))
        out = reconstruct_kernel(np.zeros((3, 3)), K, ViewMask.full(3))
        assert np.allclose(out.values, 0.0)

    def test_missing_diagonal_from_weights(self):
        # 2 known points with K = I2; missing column weights (a, b)
        a, b = 0.7, -0.4
        K = KernelMatrix(np.diag([1.0, 1.0, 0.0]))
        mask = ViewMask(3, (0, 1))
        A = np.zeros((3, 3))
        A[0, 0] = A[1, 1] = 1.0
        A[0, 2] = a
        A[1, 2] = b
        out = reconstruct_kernel(A, K, mask)
        assert out.values[2, 2] == pytest.approx(a * a + b * b)

    def test_psd_by_construction(self, rng):
        for _ in range(5):
            X = rng.normal(size=(6, 3))
            K = KernelMatrix(X @ X.T)
            mask = ViewMask(6, (0, 1, 2, 4))
            A = np.zeros((6, 6))
            A[np.ix_(mask.known_idx(), np.arange(6))] = rng.normal(size=(4, 6))
            out = reconstruct_kernel(A, K, mask)
            assert out.min_eigenvalue() >= -1e-9


class TestLosses:
    def test_within_zero_iff_blocks_equal(self, rng):
        X = rng.normal(size=(4, 2))
        K = KernelMatrix(X @ X.T)
        mask = ViewMask.full(4)
        assert loss_within(K, K, mask) == 0.0

    def test_within_all_ones_difference(self):
        mask = ViewMask(2, (0, 1))
        A = KernelMatrix(np.ones((2, 2)))
        B = KernelMatrix(np.zeros((2, 2)))
        assert loss_within(A, B, mask) == pytest.approx(4.0)

    def test_between_kernels_equal_views_zero(self, rng):
        K = rng.normal(size=(3, 3))
        K = K + K.T
        S = np.array([[0.0, 0.5, 0.5], [0.3, 0.0, 0.7], [1.0, 0.0, 0.0]])
        per_view, total = loss_between_kernels([K, K, K], S)
        assert np.allclose(per_view, 0.0) and total == pytest.approx(0.0)

    def test_between_kernels_two_view_hand_value(self):
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        per_view, total = loss_between_kernels([np.zeros((2, 2)), np.eye(2)], S)
        assert per_view[0] == pytest.approx(2.0)
        assert per_view[1] == pytest.approx(2.0)
        assert total == pytest.approx(4.0)

    def test_between_kernels_matches_naive_loops(self, rng):
        mats = [rng.normal(size=(3, 3)) for _ in range(3)]
        S = np.abs(rng.normal(size=(3, 3)))
        np.fill_diagonal(S, 0.0)
        S /= S.sum(axis=1, keepdims=True)
        per_view, total = loss_between_kernels(mats, S)
        expected = 0.0
        for m in range(3):
            acc = 0.0
            for i in range(3):
                for j in range(3):
                    combo = sum(S[m, l] * mats[l][i, j] for l in range(3) if l != m)
                    acc += (mats[m][i, j] - combo) ** 2
            assert per_view[m] == pytest.approx(acc)
            expected += acc
        assert total == pytest.approx(expected)

    def test_between_weights_hand_value(self):
        masks = (ViewMask.full(2), ViewMask.full(2))
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        total = loss_between_weights([np.eye(2), np.zeros((2, 2))], S, masks)
        assert total == pytest.approx(4.0)

    def test_between_weights_vertex_reduces_to_pairwise(self, rng):
        masks = (ViewMask(3, (0, 2)), ViewMask.full(3), ViewMask.full(3))
        A = [rng.normal(size=(3, 3)) for _ in range(3)]
        S = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        total = loss_between_weights(A, S, masks)
        expected = (
            np.sum((A[0][[0, 2]] - A[1][[0, 2]]) ** 2)
            + np.sum((A[1] - A[2]) ** 2)
            + np.sum((A[2] - A[0]) ** 2)
        )
        assert total == pytest.approx(expected)

    def test_l21_examples(self):
        assert l21_norm(np.eye(3), ViewMask.full(3)) == pytest.approx(3.0)
        assert l21_norm(np.zeros((2, 2))) == 0.0
        assert l21_norm(np.array([[3.0, 4.0], [0.0, 0.0]])) == pytest.approx(5.0)


class TestGradients:
    def build(self, seed=0, n=8, M=3):
        rng = np.random.default_rng(seed)
        known = [np.sort(rng.choice(n, size=6, replace=False)) for _ in range(M)]
        known[0] = np.arange(n)
        K_blocks = []
        for m in range(M):
            X = rng.normal(size=(known[m].size, 4))
            K_blocks.append(X @ X.T)
        A = [rng.normal(size=(n, n)) for _ in range(M)]
        for m in range(M):
            live = np.zeros(n, dtype=bool)
            live[known[m]] = True
            A[m][~live] = 0.0
        S = np.abs(rng.normal(size=(M, M)))
        np.fill_diagonal(S, 0.0)
        S /= S.sum(axis=1, keepdims=True)
        return n, M, known, K_blocks, A, S

    @pytest.mark.parametrize("coupling", ["weights", "kernels"])
    def test_embd_gradients_match_central_differences(self, coupling):
        n, M, known, K_blocks, A, S = self.build()
        for m in range(M):
            analytic = embd_smooth_grad(K_blocks, known, A, S, 0.7, coupling, m)

            def value(flat):
                trial = [a.copy() for a in A]
                trial[m] = flat.reshape(n, n)
                return embd_smooth_value(K_blocks, known, trial, S, 0.7, coupling)

            numeric = central_difference_grad(value, A[m]).reshape(n, n)
            live = np.zeros(n, dtype=bool)
            live[known[m]] = True
            err = np.linalg.norm(analytic[live] - numeric[live])
            err /= max(np.linalg.norm(numeric[live]), 1e-12)
            assert err <= 1e-4

    def test_hm_gradient_matches(self):
        n, M, known, K_blocks, _, _ = self.build(seed=3)
        rng = np.random.default_rng(7)
        A = rng.normal(size=(n, n))
        analytic = hm_smooth_grad(K_blocks, known, A)
        numeric = central_difference_grad(
            lambda flat: hm_smooth_value(K_blocks, known, flat.reshape(n, n)), A
        ).reshape(n, n)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) <= 1e-4

    def test_sdp_gradient_matches(self):
        n, M, known, K_blocks, _, S = self.build(seed=5)
        rng = np.random.default_rng(11)
        hats = [0.5 * (H + H.T) for H in (rng.normal(size=(n, n)) for _ in range(M))]
        for m in range(M):
            analytic = sdp_smooth_grad(K_blocks, known, hats, S, 0.9, m)

            def value(flat):
                trial = [h.copy() for h in hats]
                trial[m] = flat.reshape(n, n)
                return sdp_smooth_value(K_blocks, known, trial, S, 0.9)

            numeric = central_difference_grad(value, hats[m]).reshape(n, n)
            assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) <= 1e-4


class TestFits:
    @pytest.mark.parametrize("method", ["embd_ht", "app", "embd_hm", "sdp"])
    def test_complete_dataset_reproduced(self, method):
        ds = generate_toy(ToyRecipe("toyl", n=20, basis_count=5, seed=2))
        cfg = SolverConfig(method=method, c1=0.1, c2=0.1, c=0.1,
                           max_outer_iters=40, seed=1)
        result = fit(ds, cfg)
        for K, T, mask in zip(result.kernels, ds.truth, ds.masks):
            assert are(K, T, mask) is None  # nothing missing
            # clamped output equals the observed kernel everywhere
            assert np.array_equal(K.values, T.values)

    @pytest.mark.parametrize("method", ["embd_ht", "app", "embd_hm", "sdp"])
    def test_trace_monotone_and_s_rows_on_simplex(self, method):
        for seed in range(3):
            ds = random_masked_dataset(seed)
            cfg = SolverConfig(method=method, c1=0.5, c2=0.5, c=0.5,
                               max_outer_iters=20, seed=seed,
                               clamp_known_output=False)
            result = fit(ds, cfg)
            trace = np.asarray(result.objective_trace)
            assert np.all(np.diff(trace) <= 1e-10)
            if result.combination is not None:
                S = result.combination
                assert np.allclose(np.diag(S), 0.0)
                assert np.all(S >= -1e-12)
                assert np.allclose(S.sum(axis=1), 1.0, atol=1e-9)
            for K in result.kernels:
                assert K.min_eigenvalue() >= -1e-8

    def test_identical_views_recover_missing_row_embd_ht(self):
        ds = two_identical_views()
        cfg = SolverConfig(method="embd_ht", c1=1.0, c2=1e-8,
                           max_outer_iters=300, rel_tol=1e-12, seed=0)
        result = fit_embd_ht(ds, cfg)
        pred = result.kernels[0].values[9]
        truth = ds.truth[0].values[9]
        assert np.max(np.abs(pred - truth)) <= 1e-3

    def test_identical_views_recover_missing_row_sdp(self):
        ds = two_identical_views()
        cfg = SolverConfig(method="sdp", c=10.0, max_outer_iters=300,
                           rel_tol=1e-12, seed=0)
        result = fit_sdp(ds, cfg)
        pred = result.kernels[0].values[9]
        truth = ds.truth[0].values[9]
        assert np.max(np.abs(pred - truth)) <= 1e-2

    def test_hm_matches_ht_when_inits_coincide(self):
        # complete data: both initializations are the identity, the shared
        # and per-view problems coincide at the optimum
        ds = generate_toy(ToyRecipe("toyl", n=16, basis_count=4, seed=5))
        ht = fit_embd_ht(ds, SolverConfig(method="embd_ht", c1=1e-6, c2=0.05,
                                          max_outer_iters=60, seed=1))
        hm = fit_embd_hm(ds, SolverConfig(method="embd_hm", c2=0.05,
                                          max_outer_iters=60, seed=1))
        for a, b in zip(ht.kernels, hm.kernels):
            assert np.allclose(a.values, b.values, atol=1e-6)

    def test_clamp_restores_known_blocks(self):
        ds = random_masked_dataset(7)
        cfg = SolverConfig(method="embd_ht", c1=0.5, c2=2.0, max_outer_iters=10, seed=0)
        result = fit(ds, cfg)
        for K, obs, mask in zip(result.kernels, ds.kernels, ds.masks):
            idx = mask.known_idx()
            block = np.ix_(idx, idx)
            assert np.array_equal(K.values[block], obs.values[block])

    def test_group_sparsity_engages_at_large_penalty(self):
        ds = generate_toy(ToyRecipe("toyl", seed=2))
        masked = induce_missing(ds, MissingnessPlan(affected_fraction=0.5, seed=3))
        cfg = SolverConfig(method="embd_ht", c1=1.0, c2=1e3,
                           max_outer_iters=60, seed=0)
        result = fit(masked, cfg)
        for A, mask in zip(result.weights, masked.masks):
            assert basis_set(A, mask).size < len(mask.known)

    def test_sdp_iterates_stay_psd(self):
        ds = random_masked_dataset(11)
        cfg = SolverConfig(method="sdp", c=1.0, max_outer_iters=15, seed=2,
                           clamp_known_output=False)
        result = fit_sdp(ds, cfg)
        for K in result.kernels:
            assert K.min_eigenvalue() >= -1e-8

    def test_method_config_mismatch_rejected(self):
        ds = random_masked_dataset(0)
        with pytest.raises(ValueError):
            fit_app(ds, SolverConfig(method="embd_ht"))

    def test_single_view_rejected_for_coupled_methods(self):
        ds = generate_toy(ToyRecipe("toyl", n=12, basis_count=4, seed=0))
        single = MultiViewDataset(kernels=ds.kernels[:1], masks=ds.masks[:1],
                                  truth=ds.truth[:1])
        with pytest.raises(ValueError):
            fit_embd_ht(single, SolverConfig(method="embd_ht"))

    def test_divergence_reported_with_iteration_index(self):
        from mvkc.numerics import DivergenceError
        from mvkc.solvers import _Run

        run = _Run(SolverConfig(method="embd_ht"))
        run.record(1.0, 0)
        with pytest.raises(DivergenceError, match="iteration 2"):
            run.record(float("nan"), 1)
