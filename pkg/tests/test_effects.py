from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nancova import DegenerateCovariate, Dataset, chat, fit_adjustment, rank_transforms, relative_effects
from nancova.effects import EffectEstimates, adjusted_effects, centering_vector, gamma_matrix, solve_gamma
from nancova.cli import read_csv_dataset
from nancova.variance import sigma_block

from .helpers import random_dataset
from .oracles import brute_c, brute_effects, brute_rank_transforms

DATA = Path(__file__).parent / "data"


def fitted(ds, mode="weighted"):
    rf = rank_transforms(ds, mode)
    q = relative_effects(rf)
    return rf, q


class TestRelativeEffects:
    def test_two_groups_example(self):
        _, q = fitted(Dataset(([[1], [2]], [[3], [4]])))
        np.testing.assert_array_equal(q.outcome, [0.25, 0.75])

    def test_identical_multisets(self):
        _, q = fitted(Dataset(([[1, 5], [2, 6], [2, 9]], [[2, 6], [1, 9], [2, 5]])))
        np.testing.assert_allclose(q.qhat, 0.5, rtol=0, atol=1e-15)

    @given(st.integers(0, 10_000))
    def test_weighted_average_is_half(self, seed):
        ds = random_dataset(np.random.default_rng(seed), sizes=(3, 6, 4), d=2, levels=4)
        _, q = fitted(ds)
        np.testing.assert_allclose(ds.sizes / ds.N @ q.qhat, 0.5, rtol=0, atol=1e-14)
        assert np.all((q.qhat > 0) & (q.qhat < 1))


class TestChat:
    def test_constant_within_groups(self):
        ds = Dataset(([[1, 3], [2, 3], [5, 3]], [[3, 8], [4, 8]]))
        rf, q = fitted(ds)
        c = chat(rf, q)
        np.testing.assert_array_equal(c[1], 0.0)
        np.testing.assert_array_equal(c[:, 1], 0.0)

    @given(st.integers(0, 10_000))
    def test_matches_definition_and_sigma_identity(self, seed):
        ds = random_dataset(np.random.default_rng(seed), sizes=(5, 7), d=2)
        rf, q = fitted(ds)
        c = chat(rf, q)
        np.testing.assert_array_equal(c, c.T)
        assert np.all(np.diag(c) >= 0)
        yh = brute_rank_transforms([g.tolist() for g in ds.groups], list(ds.sizes / ds.N))
        np.testing.assert_allclose(c, brute_c(yh, brute_effects(yh), ds.N), rtol=0, atol=1e-14)
        # C = sum_i (n_i/N)^2 ((n_i - 1)/n_i) sigma_i
        other = sum(
            (n / ds.N) ** 2 * ((n - 1) / n) * sigma_block(rf, q, i) for i, n in enumerate(ds.sizes)
        )
        np.testing.assert_allclose(c, other, rtol=0, atol=1e-14)


class TestFitAdjustment:
    def test_worked_example_values(self):
        q = EffectEstimates(np.array([[0.38, 0.52], [0.62, 0.48]]), np.array([10, 10]))
        w = adjusted_effects(q, [0.74])
        np.testing.assert_allclose(w, [0.3652, 0.6348], rtol=0, atol=1e-12)
        assert [f"{x:.2f}" for x in w] == ["0.37", "0.63"]
        # matrix route: Gamma (q - e)
        w2 = gamma_matrix(np.array([0.74]), 2) @ (q.vector - centering_vector(2, 1))
        np.testing.assert_allclose(w2, [0.3652, 0.6348], rtol=0, atol=1e-12)

    def test_worked_example_dataset(self):
        ds = read_csv_dataset(DATA / "worked_example.csv", "treatment", "change", ["baseline"])
        assert ds.labels == ("active", "placebo")
        rf, q = fitted(ds)
        np.testing.assert_allclose(q.qhat, [[0.62, 0.48], [0.38, 0.52]], rtol=0, atol=1e-12)
        fit = fit_adjustment(rf, q)
        assert f"{fit.gamma[0]:.2f}" == "0.74"
        assert [f"{x:.2f}" for x in fit.what] == ["0.63", "0.37"]

    def test_covariate_equal_to_outcome(self):
        rng = np.random.default_rng(3)
        y = [rng.normal(size=6), rng.normal(size=5)]
        ds = Dataset(tuple(np.column_stack([v, v]) for v in y))
        rf, q = fitted(ds)
        fit = fit_adjustment(rf, q)
        np.testing.assert_allclose(fit.gamma, [1.0], rtol=0, atol=1e-12)
        np.testing.assert_allclose(fit.what, q.qhat[:, 0] - (q.qhat[:, 1] - 0.5), atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_scalar_oracle(self, seed):
        ds = random_dataset(np.random.default_rng(seed), sizes=(4, 6), d=1)
        rf, q = fitted(ds)
        fit = fit_adjustment(rf, q)
        yh = brute_rank_transforms([g.tolist() for g in ds.groups], list(ds.sizes / ds.N))
        c = brute_c(yh, brute_effects(yh), ds.N)
        assert fit.gamma[0] == pytest.approx(c[0][1] / c[1][1], abs=1e-10)

    @given(st.integers(0, 10_000), st.sampled_from(["weighted", "unweighted"]))
    def test_solve_residual_and_matrix_form(self, seed, mode):
        ds = random_dataset(np.random.default_rng(seed), sizes=(6, 5, 7), d=3)
        rf, q = fitted(ds, mode)
        fit = fit_adjustment(rf, q)
        resid = fit.cmat[1:, 1:] @ fit.gamma - fit.cmat[0, 1:]
        assert np.max(np.abs(resid)) <= 1e-10
        e = centering_vector(q.a, q.d)
        np.testing.assert_allclose(fit.what, fit.gamma_matrix @ (q.vector - e), rtol=0, atol=1e-12)

    def test_zero_gamma_returns_outcome_effects(self):
        _, q = fitted(random_dataset(np.random.default_rng(1), d=2))
        np.testing.assert_array_equal(adjusted_effects(q, np.zeros(2)), q.qhat[:, 0])

    def test_balanced_covariates_ignore_gamma(self):
        q = EffectEstimates(np.array([[0.3, 0.5, 0.5], [0.7, 0.5, 0.5]]), np.array([5, 5]))
        np.testing.assert_array_equal(adjusted_effects(q, [3.0, -2.0]), [0.3, 0.7])

    def test_no_covariates(self):
        ds = random_dataset(np.random.default_rng(2)).drop_covariates()
        rf, q = fitted(ds)
        fit = fit_adjustment(rf, q)
        assert fit.gamma.shape == (0,)
        np.testing.assert_array_equal(fit.what, q.qhat[:, 0])

    def test_constant_covariate_is_degenerate(self):
        ds = Dataset(([[1, 2], [2, 2], [3, 2]], [[4, 2], [5, 2]]))
        rf, q = fitted(ds)
        with pytest.raises(DegenerateCovariate):
            fit_adjustment(rf, q)

    def test_collinear_covariates_are_degenerate(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=12)
        groups = (np.column_stack([rng.normal(size=6), x[:6], x[:6]]), np.column_stack([rng.normal(size=6), x[6:], x[6:]]))
        rf, q = fitted(Dataset(groups))
        with pytest.raises(DegenerateCovariate):
            fit_adjustment(rf, q)

    def test_condition_guard(self):
        c = np.diag([1.0, 1.0, 1e-13])
        with pytest.raises(DegenerateCovariate):
            solve_gamma(c)
        np.testing.assert_allclose(solve_gamma(c, max_condition=1e14), [0.0, 0.0])
