"""Tests for the synthetic designs, the operating-characteristic metrics,
and the replicated table runner.

Population quantities of the correlated designs (AR covariance, the
near-collinear confounded design) are checked against closed forms derived
directly from the generative recursions, and the marginal-association
algebra demonstrates the cancellation that defeats single-covariate
screening. Monte Carlo checks use wide tolerances tied to n.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from screenclean import (
    ScreenMethod,
    SplitScheme,
    generate,
    metrics,
    run_table,
)
from screenclean.core import Dataset
from screenclean.errors import DataError, DimensionMismatchError
from screenclean.pipeline import PipelineConfig, run_screen_and_clean
from screenclean.simulation import (
    ADAPTIVE,
    CellSpec,
    ModelKind,
    Outcome,
    SimModel,
    marginal_coefficients,
    population_covariance,
    run_cell,
    table1_cells,
    table1_rows,
    table2_cells,
    table2_rows,
)

RHO, TAU = 0.95, 0.01


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------


def test_model_validation():
    with pytest.raises(DataError):
        SimModel.model_b(50, 9, delta=0.5)          # signal needs 10 columns
    with pytest.raises(DataError):
        SimModel.model_b(50, 20, delta=0.0)
    with pytest.raises(DataError):
        SimModel.model_c(50, 20, delta=0.5, rho=1.0)
    with pytest.raises(DataError):
        SimModel(kind=ModelKind.D, n=50, p=9, rho=RHO, tau=TAU)
    with pytest.raises(DataError):
        SimModel.model_d(50, tau=0.0)
    with pytest.raises(DataError):
        SimModel.model_a(0, 5)


def test_triangle_coefficients():
    model = SimModel.model_b(100, 100, delta=0.5)
    truth = model.true_model()
    want = np.zeros(100)
    want[:9] = [4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 0.5]
    np.testing.assert_array_equal(truth.beta, want)
    assert truth.support == tuple(range(9))
    assert truth.s == 9
    assert truth.psi == 0.5
    # same signal, chained design
    np.testing.assert_array_equal(
        SimModel.model_c(100, 100, delta=0.5).beta(), want)


def test_null_and_confounded_coefficients():
    null = SimModel.model_a(100, 100).true_model()
    assert null.s == 0
    assert null.support == ()
    assert math.isnan(null.psi)
    conf = SimModel.model_d(100).true_model()
    np.testing.assert_array_equal(
        conf.beta, [10.0, -10.0, 0, 0, 0, 0, 0, 0, 0, 0])


def test_chained_design_population_covariance_is_ar1():
    model = SimModel.model_c(100, 12, delta=0.5, rho=0.5)
    sigma = population_covariance(model)
    i, j = np.indices((12, 12))
    want = 0.5 ** np.abs(i - j)
    np.testing.assert_allclose(sigma, want, atol=1e-12)


def test_confounded_design_population_covariance_closed_form():
    sigma = population_covariance(SimModel.model_d(100))
    v2 = RHO * RHO + TAU * TAU                      # var of the x1 copies
    assert sigma[0, 0] == pytest.approx(1.0, rel=1e-15)
    assert sigma[0, 1] == pytest.approx(RHO, rel=1e-15)
    assert sigma[1, 1] == pytest.approx(v2, rel=1e-15)          # 0.9026
    assert sigma[1, 2] == pytest.approx(RHO * RHO, rel=1e-15)   # 0.9025
    assert sigma[0, 3] == pytest.approx(RHO * RHO, rel=1e-15)
    assert sigma[1, 3] == pytest.approx(RHO * v2, rel=1e-15)    # 0.85747
    assert sigma[3, 3] == pytest.approx(RHO * RHO * v2 + TAU * TAU, rel=1e-15)
    # the nominally independent tail block really is independent
    np.testing.assert_allclose(sigma[4:, :], np.eye(10)[4:, :], atol=1e-15)
    # population correlation of the two near-copies
    corr = sigma[0, 1] / math.sqrt(sigma[0, 0] * sigma[1, 1])
    assert corr == pytest.approx(RHO / math.sqrt(v2), rel=1e-15)
    assert corr == pytest.approx(0.9999446, abs=1e-7)


def test_confounded_marginals_cancel_and_misrank():
    # exact population algebra: every marginal association collapses to
    # ~0.5 against coefficients of size 10, and ranking by |marginal|
    # promotes a null copy over a true variable
    model = SimModel.model_d(100)
    mu = marginal_coefficients(population_covariance(model), model.beta())
    assert mu[0] == pytest.approx(10.0 * (1 - RHO), rel=1e-12)          # 0.5
    assert mu[1] == pytest.approx(
        10.0 * (RHO - RHO * RHO - TAU * TAU), rel=1e-12)                # 0.474
    assert mu[2] == pytest.approx(10.0 * RHO * (1 - RHO), rel=1e-12)    # 0.475
    assert mu[3] == pytest.approx(
        10.0 * RHO * (RHO - RHO * RHO - TAU * TAU), rel=1e-12)          # 0.4503
    np.testing.assert_allclose(mu[4:], 0.0, atol=1e-15)
    assert np.abs(mu).max() <= 0.06 * np.abs(model.beta()).max()
    top_two = set(np.argsort(-np.abs(mu))[:2].tolist())
    assert top_two == {0, 2}
    assert not top_two >= {0, 1}


def test_idealized_cancellation_flips_the_marginals():
    # the textbook version of the same phenomenon: unit-variance variables
    # with corr(1,2) = corr(1,3) = corr(2,4) = 1 - eps makes the true pair
    # invisible and the null pair scream
    eps = 0.01
    sigma = np.eye(4)
    for a, b in ((0, 1), (0, 2), (1, 3)):
        sigma[a, b] = sigma[b, a] = 1 - eps
    beta = np.array([10.0, -10.0, 0.0, 0.0])
    mu = marginal_coefficients(sigma, beta)
    np.testing.assert_allclose(
        mu, [10 * eps, -10 * eps, 10 * (1 - eps), -10 * (1 - eps)],
        rtol=1e-12)
    assert set(np.argsort(-np.abs(mu))[:2].tolist()) == {2, 3}


def test_marginal_coefficients_validates_shapes():
    with pytest.raises(DimensionMismatchError):
        marginal_coefficients(np.ones((3, 2)), np.ones(3))
    with pytest.raises(DimensionMismatchError):
        marginal_coefficients(np.eye(3), np.ones(4))


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def test_generate_is_deterministic_in_the_seed():
    model = SimModel.model_b(40, 12, delta=0.5)
    d1, t1 = generate(model, 123)
    d2, t2 = generate(model, 123)
    d3, _ = generate(model, 124)
    np.testing.assert_array_equal(d1.x, d2.x)
    np.testing.assert_array_equal(d1.y, d2.y)
    np.testing.assert_array_equal(t1.beta, t2.beta)
    assert not np.array_equal(d1.y, d3.y)
    assert not d1.standardized


def test_generate_response_follows_the_coefficients():
    model = SimModel.model_b(200, 15, delta=0.5, sigma=0.0)
    data, truth = generate(model, 7)
    np.testing.assert_allclose(data.y, data.x @ truth.beta, atol=1e-12)


def test_generator_moments_large_sample():
    n = 10 ** 5
    for model in (SimModel.model_a(n, 6),
                  SimModel.model_b(n, 12, delta=0.5),
                  SimModel.model_c(n, 12, delta=0.5)):
        data, _ = generate(model, 99)
        assert np.abs(data.x.mean(axis=0)).max() < 0.02
        assert np.abs(data.x.var(axis=0) - 1.0).max() < 0.02


def test_chained_design_adjacent_correlation():
    data, _ = generate(SimModel.model_c(10 ** 5, 12, delta=0.5), 5)
    for j in range(11):
        r = np.corrcoef(data.x[:, j], data.x[:, j + 1])[0, 1]
        assert abs(r - 0.5) < 0.02


def test_confounded_design_sample_moments():
    data, _ = generate(SimModel.model_d(10 ** 5), 11)
    v2 = RHO * RHO + TAU * TAU
    assert abs(data.x[:, 1].var() - v2) < 0.02
    r = np.corrcoef(data.x[:, 0], data.x[:, 1])[0, 1]
    assert r > 0.99
    assert r == pytest.approx(RHO / math.sqrt(v2), abs=1e-5)
    # noise contributes variance 1 on top of the signal part
    signal = data.x @ np.array([10.0, -10.0] + [0.0] * 8)
    assert abs((data.y - signal).var() - 1.0) < 0.02


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _truth(p: int, support_size: int) -> "object":
    from screenclean import TrueModel
    beta = np.zeros(p)
    beta[:support_size] = 1.0
    return TrueModel(beta=beta)


def test_metrics_perfect_recovery():
    truth = _truth(100, 9)
    outs = [Outcome(d_hat=tuple(range(9)), s_hat=tuple(range(12)))
            for _ in range(10)]
    row = metrics(outs, truth)
    assert row.size == 0.0
    assert row.power_av == 1.0
    assert row.fpr == 0.0
    assert row.coverage == 1.0
    assert row.replicates == 10


def test_metrics_single_false_positive_counting():
    truth = _truth(100, 1)
    row = metrics([Outcome(d_hat=(5,))], truth)
    assert row.size == 1.0
    assert row.fpr == pytest.approx(1.0 / 99.0, rel=1e-12)
    assert row.power_av == 0.0
    assert math.isnan(row.size_se)          # one replicate has no spread


def test_metrics_null_model_conventions():
    truth = _truth(50, 0)
    row = metrics([Outcome(d_hat=())] * 20, truth)
    assert row.size == 0.0
    assert row.power_av == 0.0              # reported 0 when s = 0
    assert row.fpr == 0.0
    # any kept variable is a false positive under the null
    row2 = metrics([Outcome(d_hat=(3,))] + [Outcome(d_hat=())] * 3, truth)
    assert row2.size == 0.25
    assert row2.fpr == pytest.approx(0.25 / 50.0, rel=1e-12)


def test_metrics_partial_power():
    truth = _truth(10, 4)
    # variables 0 and 1 kept always, 2 kept half the time, 3 never
    outs = [Outcome(d_hat=(0, 1, 2)), Outcome(d_hat=(0, 1))]
    row = metrics(outs, truth)
    assert row.power_av == pytest.approx((1 + 1 + 0.5 + 0) / 4, rel=1e-12)
    assert row.size == 0.0


def test_metrics_accepts_bare_tuples_and_needs_one_outcome():
    truth = _truth(10, 2)
    row = metrics([(0, 5), ()], truth)
    assert row.size == 0.5
    assert math.isnan(row.coverage)         # bare tuples carry no screen set
    with pytest.raises(DataError):
        metrics([], truth)


def test_metrics_coverage_requires_screen_sets_everywhere():
    truth = _truth(10, 2)
    full = [Outcome(d_hat=(0,), s_hat=(0, 1, 5)),
            Outcome(d_hat=(0,), s_hat=(0, 3))]
    row = metrics(full, truth)
    assert row.coverage == 0.5              # second screen set misses var 1
    mixed = [Outcome(d_hat=(0,), s_hat=(0, 1)), Outcome(d_hat=(0,))]
    assert math.isnan(metrics(mixed, truth).coverage)


def test_metrics_permutation_invariant_and_fpr_below_size():
    rng = np.random.default_rng(3)
    truth = _truth(20, 5)
    outs = [Outcome(d_hat=tuple(np.flatnonzero(rng.random(20) < 0.2)))
            for _ in range(40)]
    row = metrics(outs, truth)
    shuffled = list(outs)
    rng.shuffle(shuffled)
    row2 = metrics(shuffled, truth)
    for field in ("size", "power_av", "fpr", "size_se", "power_se", "fpr_se"):
        assert getattr(row2, field) == pytest.approx(
            getattr(row, field), rel=1e-12), field
    assert row.fpr <= row.size + 1e-15
    for value in (row.size, row.power_av, row.fpr):
        assert 0.0 <= value <= 1.0


# ---------------------------------------------------------------------------
# replicated runs
# ---------------------------------------------------------------------------


def _small_cell(method=ScreenMethod.LASSO) -> CellSpec:
    return CellSpec(model=SimModel.model_b(30, 10, delta=2.0), method=method,
                    splits=SplitScheme.TRI_SPLIT)


def test_run_cell_reproducible_and_order_free():
    cell = _small_cell()
    a = run_cell(cell, replicates=6, master_seed=42, cell_index=3)
    b = run_cell(cell, replicates=6, master_seed=42, cell_index=3)
    assert a.row == b.row
    assert a.failures == b.failures == ()
    # a different cell index reseeds every replicate
    c = run_cell(cell, replicates=6, master_seed=42, cell_index=4)
    assert c.row != a.row


def test_run_cell_centers_the_response_before_analysis():
    # the harness acts as the analyst: with no intercept anywhere in the
    # pipeline it must hand mean-centered responses to the procedure,
    # otherwise the sample mean of y inflates the residual scale
    cell = CellSpec(model=SimModel.model_b(90, 10, delta=2.0),
                    method=ScreenMethod.LASSO, splits=SplitScheme.TRI_SPLIT)
    reps, master, index = 6, 3, 0
    got = run_cell(cell, replicates=reps, master_seed=master)

    def manual(center: bool):
        outcomes = []
        for rep in range(reps):
            ss = np.random.SeedSequence(entropy=master,
                                        spawn_key=(index, rep))
            data_seed, run_seed = (int(v) for v in
                                   ss.generate_state(2, np.uint64))
            data, _ = generate(cell.model, data_seed)
            if center:
                data = Dataset(x=data.x, y=data.y - data.y.mean())
            cfg = PipelineConfig(screener=cell.method, splits=cell.splits,
                                 alpha=cell.alpha, seed=run_seed)
            res = run_screen_and_clean(data, cfg)
            outcomes.append(Outcome(d_hat=res.kept, s_hat=res.selected))
        return metrics(outcomes, cell.model.true_model())

    assert got.row == manual(center=True)
    assert got.row != manual(center=False)


def test_run_table_matches_isolated_cells():
    cells = [_small_cell(ScreenMethod.MARGINAL), _small_cell()]
    table = run_table(cells, replicates=5, master_seed=7)
    assert [r.cell_index for r in table] == [0, 1]
    solo = run_cell(cells[1], replicates=5, master_seed=7, cell_index=1)
    assert table[1].row == solo.row


def test_run_table_reports_progress():
    seen = []
    run_table([_small_cell()], replicates=3, master_seed=1,
              progress=lambda done, total, res: seen.append((done, total)))
    assert seen == [(1, 1)]


def test_run_cell_adaptive_has_no_coverage_claim():
    cell = CellSpec(model=SimModel.model_b(24, 10, delta=2.0),
                    method=ADAPTIVE, splits=None)
    result = run_cell(cell, replicates=4, master_seed=9, cell_index=0)
    assert math.isnan(result.row.coverage)
    assert result.row.replicates == 4


def test_run_cell_total_failure_raises():
    # 8 rows cannot support three splits of a k_n = 2 budget
    cell = CellSpec(model=SimModel.model_a(8, 5), method=ScreenMethod.LASSO,
                    splits=SplitScheme.TRI_SPLIT)
    with pytest.raises(DataError):
        run_cell(cell, replicates=3, master_seed=0)


# ---------------------------------------------------------------------------
# table layouts
# ---------------------------------------------------------------------------


def test_main_table_layout():
    rows = table1_rows()
    assert len(rows) == 16
    assert [r.splits_label for r in rows[:8]] == ["2"] * 8
    assert [r.splits_label for r in rows[8:]] == ["3"] * 8
    assert all(r.scheme is SplitScheme.TWO_SPLIT_LOO for r in rows[:8])
    assert all(r.scheme is SplitScheme.TRI_SPLIT for r in rows[8:])
    kinds = [r.model.kind for r in rows[:8]]
    assert kinds == [ModelKind.A, ModelKind.B, ModelKind.C, ModelKind.D,
                     ModelKind.A, ModelKind.B, ModelKind.C, ModelKind.D]
    assert [r.model.p for r in rows[:8]] == [100, 100, 100, 10,
                                             1000, 1000, 1000, 10]
    assert rows[1].model.delta == 0.5 and rows[5].model.delta == 1.5
    assert rows[7].model.n == 1000

    cells = table1_cells(replicates_large=200)
    assert len(cells) == 48
    assert [c.method for c in cells[:3]] == [ScreenMethod.LASSO,
                                             ScreenMethod.STEPWISE,
                                             ScreenMethod.MARGINAL]
    for c in cells:
        assert c.replicates == (200 if c.model.p >= 1000 else None)


def test_competitor_table_layout():
    rows = table2_rows()
    assert len(rows) == 8
    assert all(r.scheme is None for r in rows)
    cells = table2_cells(replicates_large=150)
    assert len(cells) == 8
    assert all(c.method == ADAPTIVE and c.splits is None for c in cells)
    assert [c.replicates for c in cells] == [None, None, None, None,
                                             150, 150, 150, None]
