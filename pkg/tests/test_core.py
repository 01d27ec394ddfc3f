"""Data handling, least squares, and eigen diagnostics."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenclean import (
    Dataset,
    SplitMode,
    TrueModel,
    check_loss_bounds,
    eigen_extremes,
    ols_fit,
    restricted_eigen,
    split,
    standardize,
    t_statistics,
)
from screenclean.core import predict
from screenclean.errors import (
    ConstantColumnError,
    DimensionMismatchError,
    ModelTooLargeError,
    NotSymmetricError,
    SingularGramError,
    TooFewRowsError,
    TooManySubsetsError,
    ZeroResidualVarianceError,
)

from conftest import ols_oracle, standardized_gaussian


# ---------------------------------------------------------------------------
# Dataset / standardize
# ---------------------------------------------------------------------------

def test_standardize_two_point_column():
    data = Dataset(np.array([0.0, 1.0]), np.array([[1.0], [3.0]]))
    out = standardize(data)
    np.testing.assert_allclose(out.x[:, 0], [-1.0, 1.0], atol=1e-14)
    assert out.standardized
    # sample (denominator-n) moments are exact
    assert abs(out.x[:, 0].mean()) < 1e-14
    assert abs((out.x[:, 0] ** 2).mean() - 1.0) < 1e-14


def test_standardize_leaves_response_and_order_alone():
    rng = np.random.default_rng(3)
    y = rng.standard_normal(8)
    x = rng.standard_normal((8, 3)) * 5 + 2
    out = standardize(Dataset(y, x))
    np.testing.assert_array_equal(out.y, y)
    # per-column affine: correlation with the original column is exactly 1
    for j in range(3):
        c = np.corrcoef(out.x[:, j], x[:, j])[0, 1]
        assert c > 1 - 1e-12


def test_standardize_idempotent():
    rng = np.random.default_rng(4)
    out = standardize(Dataset(rng.standard_normal(20),
                              rng.standard_normal((20, 4))))
    again = standardize(out)
    assert np.abs(again.x - out.x).max() < 1e-10


def test_standardize_constant_column_raises():
    data = Dataset(np.zeros(3), np.column_stack([np.ones(3) * 5,
                                                 np.arange(3.0)]))
    with pytest.raises(ConstantColumnError) as err:
        standardize(data)
    assert "0" in str(err.value) or "x1" in str(err.value)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1),
       st.integers(min_value=2, max_value=30),
       st.integers(min_value=1, max_value=6))
def test_standardize_moments_property(seed, n, p):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p)) * rng.uniform(0.5, 10) + rng.uniform(-5, 5)
    if any((x[:, j] == x[0, j]).all() for j in range(p)):
        return  # degenerate draw, covered by the constant-column test
    out = standardize(Dataset(rng.standard_normal(n), x))
    assert np.abs(out.x.mean(axis=0)).max() <= 1e-10
    assert np.abs((out.x ** 2).mean(axis=0) - 1.0).max() <= 1e-8


def test_dataset_rejects_bad_shapes_and_nonfinite():
    with pytest.raises(DimensionMismatchError):
        Dataset(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DimensionMismatchError):
        Dataset(np.zeros(3), np.zeros((2, 2)))
    with pytest.raises(DimensionMismatchError):
        Dataset(np.array([1.0, np.nan]), np.ones((2, 1)))


def test_dataset_arrays_immutable():
    data = Dataset(np.zeros(3), np.ones((3, 2)))
    with pytest.raises(ValueError):
        data.y[0] = 1.0
    with pytest.raises(ValueError):
        data.x[0, 0] = 2.0


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------

def test_split_exact_thirds():
    plan = split(9, SplitMode.TRI_SPLIT, 0)
    assert [g.size for g in plan.indices] == [3, 3, 3]


def test_split_remainder_to_earlier_groups():
    plan = split(10, SplitMode.TRI_SPLIT, 1)
    assert [g.size for g in plan.indices] == [4, 3, 3]


def test_split_partitions_everything():
    for seed in range(5):
        plan = split(17, SplitMode.TWO_SPLIT, seed)
        merged = np.sort(np.concatenate(plan.indices))
        np.testing.assert_array_equal(merged, np.arange(17))


def test_split_deterministic_in_seed():
    a = split(23, SplitMode.TRI_SPLIT, 99)
    b = split(23, SplitMode.TRI_SPLIT, 99)
    for g1, g2 in zip(a.indices, b.indices):
        np.testing.assert_array_equal(g1, g2)
    c = split(23, SplitMode.TRI_SPLIT, 100)
    assert any(not np.array_equal(g1, g3)
               for g1, g3 in zip(a.indices, c.indices))


def test_split_too_few_rows():
    with pytest.raises(TooFewRowsError):
        split(2, SplitMode.TRI_SPLIT, 0)
    with pytest.raises(TooFewRowsError):
        split(1, SplitMode.TWO_SPLIT, 0)


# ---------------------------------------------------------------------------
# ols_fit / t_statistics
# ---------------------------------------------------------------------------

def test_ols_single_column_hand_example():
    data = Dataset(np.array([2.0, 0.0]), np.array([[1.0], [-1.0]]))
    fit = ols_fit(data, (0,))
    assert fit.coef[0] == pytest.approx(1.0, abs=1e-14)


def test_ols_interpolation_is_perfect_fit():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((12, 2))
    y = x @ np.array([3.0, -2.0])
    fit = ols_fit(Dataset(y, x), (0, 1))
    assert fit.perfect_fit
    assert fit.sigma_hat <= 1e-10
    np.testing.assert_allclose(predict(Dataset(y, x), fit.model, fit.coef),
                               y, atol=1e-9)


def test_ols_matches_gaussian_elimination_oracle():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((6, 3))
    y = rng.standard_normal(6)
    fit = ols_fit(Dataset(y, x), (0, 1, 2))
    np.testing.assert_allclose(fit.coef, ols_oracle(x, y), atol=1e-8)


def test_ols_model_too_large_and_duplicates():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((4, 6))
    data = Dataset(rng.standard_normal(4), x)
    with pytest.raises(ModelTooLargeError):
        ols_fit(data, (0, 1, 2, 3))
    with pytest.raises(SingularGramError):
        ols_fit(data, (0, 0))


def test_ols_singular_gram_on_duplicated_column():
    rng = np.random.default_rng(17)
    col = rng.standard_normal(10)
    x = np.column_stack([col, col, rng.standard_normal(10)])
    with pytest.raises(SingularGramError):
        ols_fit(Dataset(rng.standard_normal(10), x), (0, 1))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_ols_residual_orthogonal_to_selected_columns(seed):
    rng = np.random.default_rng(seed)
    n, p = 15, 4
    x, y = standardized_gaussian(rng, n, p, beta=[1.0, -1.0, 0.0, 0.0])
    fit = ols_fit(Dataset(y, x), (0, 1, 2))
    resid = y - x[:, :3] @ fit.coef
    for j in range(3):
        assert abs(x[:, j] @ resid) <= 1e-8 * n


def test_ols_projection_idempotence():
    rng = np.random.default_rng(19)
    x = rng.standard_normal((20, 3))
    y = rng.standard_normal(20)
    fit = ols_fit(Dataset(y, x), (0, 1, 2))
    fitted = x @ fit.coef
    refit = ols_fit(Dataset(fitted, x), (0, 1, 2))
    np.testing.assert_allclose(refit.coef, fit.coef, atol=1e-8)


def test_t_statistic_direct_formula():
    # engineered so coef = 2, sigma_hat = 1, cov_scale = 1/4 -> T = 4
    x = np.array([[2.0], [0.0], [0.0]])
    y = np.array([4.0, 1.0, 1.0])
    fit = ols_fit(Dataset(y, x), (0,))
    assert fit.coef[0] == pytest.approx(2.0, abs=1e-14)
    assert fit.sigma_hat == pytest.approx(1.0, abs=1e-14)
    assert fit.cov_scale[0, 0] == pytest.approx(0.25, abs=1e-14)
    assert t_statistics(fit)[0] == pytest.approx(4.0, abs=1e-12)


def test_t_statistic_zero_numerator():
    # column exactly orthogonal to y -> coefficient 0 -> t = 0
    x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    fit = ols_fit(Dataset(y, x), (0,))
    assert fit.coef[0] == 0.0
    assert t_statistics(fit)[0] == 0.0


def test_t_statistic_matches_textbook_r_identity():
    rng = np.random.default_rng(23)
    n = 20
    x = rng.standard_normal((n, 1))
    y = 0.7 * x[:, 0] + rng.standard_normal(n)
    fit = ols_fit(Dataset(y, x), (0,))
    r = float(x[:, 0] @ y / (np.linalg.norm(x) * np.linalg.norm(y)))
    df = n - 1
    t_oracle = r * math.sqrt(df) / math.sqrt(1.0 - r * r)
    assert t_statistics(fit)[0] == pytest.approx(t_oracle, abs=1e-8)


def test_t_statistics_scale_equivariance_in_y():
    rng = np.random.default_rng(29)
    x = rng.standard_normal((18, 3))
    y = x @ np.array([1.0, 0.5, 0.0]) + rng.standard_normal(18)
    base = t_statistics(ols_fit(Dataset(y, x), (0, 1, 2)))
    for c in (0.1, 3.0, 250.0):
        scaled = t_statistics(ols_fit(Dataset(c * y, x), (0, 1, 2)))
        np.testing.assert_allclose(scaled, base, atol=1e-8)


def test_t_statistics_perfect_fit_raises():
    x = np.array([[1.0], [2.0], [3.0]])
    y = 2.0 * x[:, 0]
    with pytest.raises(ZeroResidualVarianceError):
        t_statistics(ols_fit(Dataset(y, x), (0,)))


# ---------------------------------------------------------------------------
# eigen diagnostics
# ---------------------------------------------------------------------------

def test_eigen_extremes_identity_and_diagonal():
    assert eigen_extremes(np.eye(3)) == (pytest.approx(1.0), pytest.approx(1.0))
    lo, hi = eigen_extremes(np.diag([0.5, 2.0]))
    assert lo == pytest.approx(0.5)
    assert hi == pytest.approx(2.0)


def test_eigen_extremes_closed_form_correlation():
    rho = 0.5
    lo, hi = eigen_extremes(np.array([[1.0, rho], [rho, 1.0]]))
    assert lo == pytest.approx(1.0 - rho, abs=1e-12)
    assert hi == pytest.approx(1.0 + rho, abs=1e-12)


def test_eigen_extremes_rejects_asymmetry():
    with pytest.raises(NotSymmetricError):
        eigen_extremes(np.array([[1.0, 0.2], [0.1, 1.0]]))


def test_restricted_eigen_k1_standardized():
    rng = np.random.default_rng(31)
    x, y = standardized_gaussian(rng, 25, 4)
    lo, hi = restricted_eigen(Dataset(y, x, standardized=True), 1)
    assert lo == pytest.approx(1.0, abs=1e-10)
    assert hi == pytest.approx(1.0, abs=1e-10)


def test_restricted_eigen_orthogonal_design():
    # Hadamard-style columns: exactly orthogonal, mean 0, variance 1
    h = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    data = Dataset(np.zeros(4), h, standardized=True)
    for k in (1, 2):
        lo, hi = restricted_eigen(data, k)
        assert lo == pytest.approx(1.0, abs=1e-12)
        assert hi == pytest.approx(1.0, abs=1e-12)


def test_restricted_eigen_matches_subset_loop():
    rng = np.random.default_rng(37)
    x, y = standardized_gaussian(rng, 40, 5)
    data = Dataset(y, x, standardized=True)
    lo, hi = restricted_eigen(data, 2)
    gram = x.T @ x / 40
    per_subset = [eigen_extremes(gram[np.ix_(m, m)])
                  for m in itertools.combinations(range(5), 2)]
    assert lo == pytest.approx(min(v[0] for v in per_subset), abs=1e-12)
    assert hi == pytest.approx(max(v[1] for v in per_subset), abs=1e-12)
    # every enumerated subset's extremes live inside [phi_n(k), Phi_n(k)]
    for v in per_subset:
        assert lo - 1e-12 <= v[0] and v[1] <= hi + 1e-12


def test_restricted_eigen_subset_budget():
    rng = np.random.default_rng(41)
    x = rng.standard_normal((16, 30))
    with pytest.raises(TooManySubsetsError):
        restricted_eigen(Dataset(rng.standard_normal(16), x), 15)


# ---------------------------------------------------------------------------
# loss-bound survey
# ---------------------------------------------------------------------------

def _loss_oracle(x, y, beta, model):
    """In-sample loss (b - beta)' (X'X/n) (b - beta) via an oracle refit."""
    n = x.shape[0]
    diff = -np.asarray(beta, dtype=float).copy()
    if model:
        cols = list(model)
        diff[cols] += ols_oracle(x[:, cols], y)
    return float(diff @ (x.T @ x / n) @ diff)


def test_loss_bounds_noiseless_containing_model():
    rng = np.random.default_rng(43)
    x, _ = standardized_gaussian(rng, 30, 4)
    beta = np.array([2.0, -1.0, 0.0, 0.0])
    y = x @ beta
    report = check_loss_bounds(Dataset(y, x, standardized=True),
                               TrueModel(beta, sigma=0.0), m=2)
    assert report.sup_loss <= 1e-18
    assert report.sup_loss <= report.sup_bound
    assert not report.sup_violated


def test_loss_bounds_empty_model_identity():
    rng = np.random.default_rng(47)
    x, _ = standardized_gaussian(rng, 50, 4)
    beta = np.array([1.5, 0.8, 0.0, 0.0])
    y = x @ beta + 0.1 * rng.standard_normal(50)
    data = Dataset(y, x, standardized=True)
    tm = TrueModel(beta)
    # direct Eq-style evaluation for the empty model
    gram = x.T @ x / 50
    loss_empty = float(beta @ gram @ beta)
    assert loss_empty == pytest.approx(_loss_oracle(x, y, beta, ()), abs=1e-12)
    # Rayleigh bound: beta' Gram beta >= psi^2 * phi_n(s), deterministically
    phi_s, _ = restricted_eigen(data, tm.s)
    assert loss_empty >= tm.psi ** 2 * phi_s - 1e-12


def test_loss_bounds_match_brute_force_survey():
    rng = np.random.default_rng(53)
    n, p, m = 200, 6, 2
    beta = np.array([1.0, -0.7, 0.0, 0.0, 0.0, 0.0])
    x, y = standardized_gaussian(rng, n, p, beta=beta)
    data = Dataset(y, x, standardized=True)
    tm = TrueModel(beta)
    report = check_loss_bounds(data, tm, m)

    d_set = set(tm.support)
    sup_loss, inf_loss = -math.inf, math.inf
    n_sup = n_inf = 0
    for k in range(m + 1):
        for model in itertools.combinations(range(p), k):
            value = _loss_oracle(x, y, beta, model)
            if d_set <= set(model):
                n_sup += 1
                sup_loss = max(sup_loss, value)
            else:
                n_inf += 1
                inf_loss = min(inf_loss, value)
    assert report.n_sup_models == n_sup
    assert report.n_inf_models == n_inf
    assert report.sup_loss == pytest.approx(sup_loss, rel=1e-9)
    assert report.inf_loss == pytest.approx(inf_loss, rel=1e-9)


def test_loss_bounds_subset_budget():
    rng = np.random.default_rng(59)
    x = rng.standard_normal((40, 60))
    data = Dataset(rng.standard_normal(40), x)
    with pytest.raises(TooManySubsetsError):
        check_loss_bounds(data, TrueModel(np.zeros(60)), m=5)
