"""Column pruning against its exact oracles.

The least-squares oracle itself is validated against explicit feature-space
least squares, then everything else is checked against the oracle.
"""

import numpy as np
import pytest

from obslim.errors import NotSpdError
from obslim.linalg import SpdMatrix, invert_spd
from obslim.obs_core import (
    ColumnPruneState,
    brute_force_best_columns,
    column_errors,
    least_squares_oracle,
    mask_residual,
    prune_column,
)

from conftest import rand_spd


def residual_of(w, h: SpdMatrix, kept, w_hat) -> float:
    """Reconstruction error of an arbitrary candidate w_hat over kept columns."""
    kept = np.asarray(kept, dtype=np.intp)
    total = float(np.einsum("ij,jk,ik->", w, h.a, w))
    cross = float(np.einsum("ij,ij->", w_hat, w @ h.a[:, kept]))
    quad = float(np.einsum("ij,jk,ik->", w_hat, h.a[np.ix_(kept, kept)], w_hat))
    return total - 2.0 * cross + quad


class TestColumnErrors:
    def test_identity_hessian(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(column_errors(w, SpdMatrix(np.eye(2))), [10.0, 20.0])

    def test_zero_column(self):
        w = np.array([[0.0, 1.0], [0.0, 2.0]])
        errs = column_errors(w, rand_spd(np.random.default_rng(0), 2))
        assert errs[0] == 0.0

    def test_formula_oracle(self):
        rng = np.random.default_rng(1)
        w = rng.normal(size=(4, 4))
        h_inv = invert_spd(rand_spd(rng, 4))
        errs = column_errors(w, h_inv)
        for p in range(4):
            expect = sum(w[i, p] ** 2 for i in range(4)) / h_inv.a[p, p]
            assert abs(errs[p] - expect) < 1e-12
        assert np.all(errs >= 0)

    def test_non_positive_diagonal(self):
        with pytest.raises(NotSpdError, match="diagonal"):
            column_errors(np.ones((2, 2)), SpdMatrix(np.diag([1.0, 0.0])))

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            column_errors(np.ones((2, 3)), SpdMatrix(np.eye(2)))


class TestPruneColumn:
    def test_identity_hinv_zeroes_only_target(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(3, 4))
        state = ColumnPruneState.initial(w, SpdMatrix(np.eye(4)))
        prune_column(state, 1)
        assert np.array_equal(state.w[:, 1], np.zeros(3))
        for col in (0, 2, 3):
            assert np.array_equal(state.w[:, col], w[:, col])
        assert state.alive == [0, 2, 3]

    def test_zero_column_no_change(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(3, 3))
        w[:, 1] = 0.0
        h = rand_spd(rng, 3)
        state = ColumnPruneState.initial(w, invert_spd(h))
        prune_column(state, 1)
        assert state.step_errors == [(1, 0.0)]
        assert np.array_equal(state.w[:, [0, 2]], w[:, [0, 2]])

    def test_matches_least_squares_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            w = rng.normal(size=(3, 3))
            h = rand_spd(rng, 3)
            p = int(rng.integers(3))
            state = ColumnPruneState.initial(w, invert_spd(h))
            prune_column(state, p)
            kept = state.alive
            expect = least_squares_oracle(w, h, kept)
            assert np.abs(state.w[:, kept] - expect).max() < 1e-8

    def test_position_out_of_range(self):
        state = ColumnPruneState.initial(np.ones((2, 2)), SpdMatrix(np.eye(2)))
        with pytest.raises(ValueError):
            prune_column(state, 2)

    def test_single_row_degenerates_to_single_weight_rule(self):
        # with one row, column pruning is classic single-weight pruning:
        # error w_p^2 / (H^-1)_pp and update -(w_p / (H^-1)_pp) * (H^-1)_p,:
        rng = np.random.default_rng(15)
        d = 5
        w = rng.normal(size=(1, d))
        h_inv = invert_spd(rand_spd(rng, d))
        errs = column_errors(w, h_inv)
        for p in range(d):
            assert abs(errs[p] - w[0, p] ** 2 / h_inv.a[p, p]) < 1e-15 * errs.max()
        p = int(np.argmin(errs))
        expect = w[0] - (w[0, p] / h_inv.a[p, p]) * h_inv.a[p, :]
        state = ColumnPruneState.initial(w, h_inv)
        prune_column(state, p)
        kept = state.alive
        assert np.abs(state.w[0, kept] - expect[kept]).max() < 1e-12
        assert state.w[0, p] == 0.0


class TestLeastSquaresOracle:
    def test_keep_all(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=(3, 5))
        h = rand_spd(rng, 5)
        assert np.abs(least_squares_oracle(w, h, np.arange(5)) - w).max() < 1e-9

    def test_identity_hessian_restriction(self):
        rng = np.random.default_rng(6)
        w = rng.normal(size=(3, 5))
        out = least_squares_oracle(w, SpdMatrix(np.eye(5)), [1, 3])
        assert np.allclose(out, w[:, [1, 3]])

    def test_explicit_feature_space_oracle(self):
        # same minimizer as explicit lstsq over the raw features
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, m = 8, 50
            x = rng.normal(size=(n, m))
            w = rng.normal(size=(4, n))
            h = SpdMatrix(x @ x.T)
            kept = np.sort(rng.choice(n, size=5, replace=False))
            expect, *_ = np.linalg.lstsq(x[kept].T, (w @ x).T, rcond=None)
            assert np.abs(least_squares_oracle(w, h, kept) - expect.T).max() < 1e-8

    def test_local_optimality_probe(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=(3, 6))
        h = rand_spd(rng, 6)
        kept = [0, 2, 5]
        w_hat = least_squares_oracle(w, h, kept)
        base = residual_of(w, h, kept, w_hat)
        assert abs(base - mask_residual(w, h, kept)) < 1e-9 * max(1, base)
        for _ in range(20):
            probe = w_hat + 1e-3 * rng.normal(size=w_hat.shape)
            assert residual_of(w, h, kept, probe) >= base - 1e-12

    def test_empty_kept(self):
        out = least_squares_oracle(np.ones((2, 3)), SpdMatrix(np.eye(3)), [])
        assert out.shape == (2, 0)


class TestBruteForce:
    def test_k_zero(self):
        rng = np.random.default_rng(9)
        w = rng.normal(size=(2, 4))
        removed, err = brute_force_best_columns(w, rand_spd(rng, 4), 0)
        assert removed == ()
        assert err < 1e-12

    def test_k_all(self):
        rng = np.random.default_rng(10)
        w = rng.normal(size=(2, 3))
        h = rand_spd(rng, 3)
        removed, err = brute_force_best_columns(w, h, 3)
        assert removed == (0, 1, 2)
        expect = float(np.trace(w @ h.a @ w.T))  # nothing kept: full energy lost
        assert abs(err - expect) < 1e-9 * max(1, expect)

    def test_independent_enumeration_oracle(self):
        # exhaustive evaluation through explicit feature-space least squares
        rng = np.random.default_rng(11)
        from itertools import combinations

        n, m = 6, 40
        x = rng.normal(size=(n, m))
        w = rng.normal(size=(3, n))
        h = SpdMatrix(x @ x.T)
        removed, err = brute_force_best_columns(w, h, 2)
        best_err, best_set = np.inf, None
        for drop in combinations(range(n), 2):
            kept = np.setdiff1d(np.arange(n), drop)
            w_hat, *_ = np.linalg.lstsq(x[kept].T, (w @ x).T, rcond=None)
            resid = float(((w @ x - w_hat.T @ x[kept]) ** 2).sum())
            if resid < best_err:
                best_err, best_set = resid, drop
        assert removed == best_set
        assert abs(err - best_err) < 1e-7 * max(1.0, best_err)

    def test_enumeration_guard(self):
        with pytest.raises(ValueError, match="guard"):
            brute_force_best_columns(np.ones((1, 50)), SpdMatrix(np.eye(50)), 25)


class TestSequentialExactness:
    def test_any_order_matches_mask_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(15):
            d = int(rng.integers(4, 10))
            w = rng.normal(size=(int(rng.integers(2, 6)), d))
            h = rand_spd(rng, d)
            removed = rng.choice(d, size=int(rng.integers(1, d)), replace=False)
            kept = sorted(set(range(d)) - set(removed.tolist()))
            expect = least_squares_oracle(w, h, kept)
            norm = max(np.linalg.norm(expect), 1e-12)
            for _ in range(3):
                order = rng.permutation(removed)
                state = ColumnPruneState.initial(w, invert_spd(h))
                for orig in order:
                    prune_column(state, state.alive.index(int(orig)))
                assert state.alive == kept
                diff = np.linalg.norm(state.w[:, kept] - expect) / norm
                assert diff < 1e-8

    def test_step_errors_bound_mask_residual(self):
        # accumulated step errors telescope to the joint residual, hence >=
        rng = np.random.default_rng(13)
        for _ in range(10):
            d = 8
            w = rng.normal(size=(4, d))
            h = rand_spd(rng, d)
            state = ColumnPruneState.initial(w, invert_spd(h))
            for orig in rng.choice(d, size=4, replace=False):
                prune_column(state, state.alive.index(int(orig)))
            total = sum(err for _, err in state.step_errors)
            resid = mask_residual(w, h, state.alive)
            assert total >= resid - 1e-9 * max(1, resid)
            assert abs(total - resid) < 1e-8 * max(1, resid)

    def test_scale_invariance(self):
        # H -> cH scales every error by c uniformly, so the argmin and all
        # compensation updates are unchanged
        rng = np.random.default_rng(14)
        w = rng.normal(size=(4, 6))
        h = rand_spd(rng, 6)
        h2 = SpdMatrix(2.0 * h.a)
        errs1 = column_errors(w, invert_spd(h))
        errs2 = column_errors(w, invert_spd(h2))
        assert np.argmin(errs1) == np.argmin(errs2)
        assert np.abs(errs2 - 2.0 * errs1).max() < 1e-8 * errs1.max()
        s1 = ColumnPruneState.initial(w, invert_spd(h))
        s2 = ColumnPruneState.initial(w, invert_spd(h2))
        for s in (s1, s2):
            prune_column(s, 2)
        assert np.abs(s1.w - s2.w).max() < 1e-12
