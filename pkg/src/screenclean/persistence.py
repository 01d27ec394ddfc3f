"""Constrained-lasso predictive risk and the persistence-gap experiment.

Here the target is prediction, not support recovery: for a second-moment
matrix Gamma = E(ZZ') with Z = (Y, X_1..X_p), the predictive risk of a
coefficient vector is the quadratic form R(beta) = gamma' Gamma gamma with
gamma = (-1, beta). The constrained lasso minimizes the empirical risk over
the l1 ball of radius omega; ``cv_radius_select`` picks the radius on a
uniform grid by held-out error, and ``persistence_gap`` measures how much
population risk that choice gives away relative to the best radius on the
same grid. ``run_trend_experiment`` replicates the whole procedure over
growing n with radius budget n^{1/5}, the regime in which the gap should
shrink. None of this assumes the linear model is true — Gamma is all that
enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, SplitMode, split
from .errors import DataError, DimensionMismatchError, NotSymmetricError
from .screeners import _solve
from .selection import _pick_winner
from .simulation import SimModel, generate, population_covariance

# Relative width of the accepted l1-norm band in the constraint-to-penalty
# bisection: stop once the norm lands in [omega*(1-BAND), omega].
BAND = 1e-4
MAX_BISECT = 200


@dataclass(frozen=True)
class RiskModel:
    """Second-moment matrix of (Y, X), population or empirical."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise DimensionMismatchError(
                f"gamma must be square of order >= 2, got {g.shape}")
        scale = max(1.0, float(np.abs(g).max()))
        if np.abs(g - g.T).max() > 1e-8 * scale:
            raise NotSymmetricError("gamma is not symmetric within 1e-8")
        g = (g + g.T) / 2.0
        if float(np.linalg.eigvalsh(g)[0]) < -1e-8 * scale:
            raise DataError("gamma is not positive semidefinite within 1e-8")
        g.flags.writeable = False
        object.__setattr__(self, "gamma", g)

    @property
    def p(self) -> int:
        return self.gamma.shape[0] - 1


def predictive_risk(beta: np.ndarray, risk: RiskModel) -> float:
    """R(beta) = (-1, beta)' Gamma (-1, beta): expected squared error of the
    linear predictor x'beta under the moments in ``risk``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (risk.p,):
        raise DimensionMismatchError(
            f"beta length {beta.shape} != p = {risk.p}")
    g = np.concatenate(([-1.0], beta))
    return float(g @ risk.gamma @ g)


def empirical_risk_model(data: Dataset) -> RiskModel:
    """Gamma-hat = Z'Z/n for Z = [y, x]; then R equals the mean squared
    residual on this data."""
    z = np.column_stack([data.y, data.x])
    return RiskModel(gamma=z.T @ z / data.n)


def population_risk_model(model: SimModel) -> RiskModel:
    """Exact Gamma of a simulation design (moments in closed form)."""
    sigma_x = population_covariance(model)
    beta = model.beta()
    p = model.p
    g = np.empty((p + 1, p + 1))
    g[0, 0] = float(beta @ sigma_x @ beta) + model.sigma ** 2
    cross = sigma_x @ beta
    g[0, 1:] = cross
    g[1:, 0] = cross
    g[1:, 1:] = sigma_x
    return RiskModel(gamma=g)


def constrained_lasso(data: Dataset, omega: float) -> np.ndarray:
    """Least squares over the l1 ball of radius ``omega``.

    Solved through the penalized form: bisection on lambda until the
    solution's l1 norm lands in [omega*(1-1e-4), omega], or the
    unconstrained fit already satisfies the constraint. The returned vector
    always obeys the constraint (up to 1e-6).
    """
    if omega < 0:
        raise DataError(f"omega must be >= 0, got {omega}")
    p = data.p
    if omega == 0:
        return np.zeros(p)
    x = data.x
    y = data.y
    if p < data.n:
        ols = np.linalg.lstsq(x, y, rcond=None)[0]
        if float(np.abs(ols).sum()) <= omega:
            return ols
    lam_max = 2.0 * float(np.abs(x.T @ y).max())
    if lam_max <= 0.0:
        return np.zeros(p)
    band_lo = omega * (1.0 - BAND)

    def norm1(b) -> float:
        return float(np.abs(b).sum())

    # find an infeasible (over-norm) lower endpoint; if even a tiny penalty
    # stays inside the ball, the constraint is slack and that fit is final
    lo = lam_max * 1e-6
    beta_lo = _solve(x, y, lo)[0]
    while norm1(beta_lo) <= omega:
        if norm1(beta_lo) >= band_lo or lo <= lam_max * 1e-12:
            return beta_lo
        lo *= 1e-3
        beta_lo = _solve(x, y, lo, beta_lo)[0]

    hi = lam_max
    beta_hi = np.zeros(p)
    for _ in range(MAX_BISECT):
        if hi <= lo * (1.0 + 1e-12):
            break
        mid = math.sqrt(lo * hi)
        beta_mid = _solve(x, y, mid, beta_lo)[0]
        nm = norm1(beta_mid)
        if nm > omega:
            lo, beta_lo = mid, beta_mid
        elif nm < band_lo:
            hi, beta_hi = mid, beta_mid
        else:
            return beta_mid
    return beta_hi  # feasible side of a collapsed bracket


@dataclass(frozen=True)
class RadiusSelection:
    """Cross-validated radius choice with the whole per-radius path."""

    beta: np.ndarray
    radius: float
    index: int
    radii: np.ndarray
    betas: np.ndarray          # grid x p
    holdout_mse: np.ndarray


def cv_radius_select(train: Dataset, holdout: Dataset, omega_max: float,
                     grid: int = 50) -> RadiusSelection:
    """Fit per-radius on ``train``, pick the radius minimizing holdout MSE.

    Radii form a uniform grid on [0, omega_max]; score ties break toward
    the smaller radius.
    """
    if grid < 2:
        raise DataError(f"radius grid needs >= 2 points, got {grid}")
    if omega_max < 0:
        raise DataError(f"omega_max must be >= 0, got {omega_max}")
    if train.p != holdout.p:
        raise DimensionMismatchError(
            f"train has p={train.p}, holdout p={holdout.p}")
    radii = np.linspace(0.0, omega_max, grid)
    betas = np.empty((grid, train.p))
    for i, r in enumerate(radii):
        betas[i] = constrained_lasso(train, float(r))
    mses = np.empty(grid)
    for i in range(grid):
        resid = holdout.y - holdout.x @ betas[i]
        mses[i] = float(np.mean(resid ** 2))
    w = _pick_winner(mses, [0] * grid, float(np.mean(holdout.y ** 2)))
    return RadiusSelection(beta=betas[w].copy(), radius=float(radii[w]),
                           index=w, radii=radii, betas=betas,
                           holdout_mse=mses)


def persistence_gap(chosen_beta: np.ndarray, betas: np.ndarray,
                    risk: RiskModel) -> float:
    """Excess population risk of the chosen fit over the best on the grid."""
    risks = np.array([predictive_risk(b, risk) for b in betas])
    return float(predictive_risk(chosen_beta, risk) - risks.min())


# ---------------------------------------------------------------------------
# trend experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendRow:
    n: int
    omega: float
    median_gap: float
    mean_gap: float
    replicates: int


@dataclass(frozen=True)
class TrendCurve:
    """First-replicate audit curve at one n (for the CSV report)."""

    n: int
    radii: np.ndarray
    l1_norms: np.ndarray
    holdout_mse: np.ndarray
    population_risk: np.ndarray


@dataclass(frozen=True)
class TrendResult:
    rows: tuple[TrendRow, ...]
    curves: tuple[TrendCurve, ...]


def run_trend_experiment(n_values=(100, 400, 1600), replicates: int = 50,
                         master_seed: int = 0, p: int = 20,
                         delta: float = 0.5, sigma: float = 1.0,
                         grid: int = 50,
                         omega_max: float | None = None) -> TrendResult:
    """Median persistence gap per n, radius budget omega = n^{1/5}.

    Each replicate draws fresh triangle-signal data, halves it, selects the
    radius on the first half against the second, and scores the gap with
    the analytic population moments. ``omega_max`` overrides the n^{1/5}
    budget when set (useful for noiseless exact-recovery checks).
    """
    if replicates < 1:
        raise DataError("need at least 1 replicate")
    rows = []
    curves = []
    for n_idx, n in enumerate(n_values):
        model = SimModel.model_b(int(n), p, delta=delta, sigma=sigma)
        risk = population_risk_model(model)
        omega = float(omega_max) if omega_max is not None else float(n) ** 0.2
        gaps = []
        for rep in range(replicates):
            ss = np.random.SeedSequence(entropy=master_seed,
                                        spawn_key=(n_idx, rep))
            st = ss.generate_state(2, np.uint64)
            data, _ = generate(model, int(st[0]))
            plan = split(data.n, SplitMode.TWO_SPLIT, int(st[1]))
            train = data.take(plan.indices[0])
            holdout = data.take(plan.indices[1])
            sel = cv_radius_select(train, holdout, omega, grid)
            gaps.append(persistence_gap(sel.beta, sel.betas, risk))
            if rep == 0:
                curves.append(TrendCurve(
                    n=int(n), radii=sel.radii,
                    l1_norms=np.abs(sel.betas).sum(axis=1),
                    holdout_mse=sel.holdout_mse,
                    population_risk=np.array(
                        [predictive_risk(b, risk) for b in sel.betas])))
        gaps_arr = np.array(gaps)
        rows.append(TrendRow(n=int(n), omega=omega,
                             median_gap=float(np.median(gaps_arr)),
                             mean_gap=float(gaps_arr.mean()),
                             replicates=replicates))
    return TrendResult(rows=tuple(rows), curves=tuple(curves))
