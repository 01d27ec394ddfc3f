"""Stage-I screeners: lasso path, forward stepwise, marginal regression.

Each screener emits a :class:`ScreenPath` — an ordered family of candidate
models indexed by a tuning value, every one capped at ``k_n`` variables.
The lasso solver is a warm-started coordinate descent on the objective

    sum_i (y_i - x_i' b)^2 + lambda * sum_j |b_j|

(no 1/2, no 1/n factors), with the objective checked for monotone descent
on every sweep and the KKT residual verified on exit. Nearly identical
columns flatten the objective along their difference and stall the
per-coordinate updates; a stalled iterate is finished off by solving the
sign-fixed stationarity system on the active set directly and re-checking
the full KKT conditions. The adaptive-lasso refit used by the two-stage
competitor reuses the same kernel through a per-coordinate rescaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

from .core import Dataset, ols_fit
from .errors import (
    ConvergenceError,
    DataError,
    DimensionMismatchError,
    EmptyPilotError,
    SingularGramError,
)

CD_TOL = 1e-8          # max |coefficient change| per sweep
CD_MAX_SWEEPS = 10_000
KKT_REL_TOL = 1e-6     # KKT residual allowance, times n
DEFAULT_GRID = 100     # log-spaced lambda grid size
GRID_SPAN = 1e-3       # grid floor: lambda_max * GRID_SPAN


class ScreenMethod(Enum):
    LASSO = "lasso"
    STEPWISE = "stepwise"
    MARGINAL = "marginal"


# ---------------------------------------------------------------------------
# coordinate-descent kernel
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _pass_over(x, r, beta, idx, col_ss, half):
    """One coordinate-descent pass over ``idx``; returns max |change|."""
    n = x.shape[0]
    maxd = 0.0
    for t in range(idx.shape[0]):
        j = idx[t]
        cs = col_ss[j]
        if cs <= 0.0:
            continue
        bj = beta[j]
        rho = cs * bj
        for i in range(n):
            rho += x[i, j] * r[i]
        if rho > half:
            nb = (rho - half) / cs
        elif rho < -half:
            nb = (rho + half) / cs
        else:
            nb = 0.0
        d = nb - bj
        if d != 0.0:
            for i in range(n):
                r[i] -= d * x[i, j]
            beta[j] = nb
            ad = -d if d < 0.0 else d
            if ad > maxd:
                maxd = ad
    return maxd


@njit(cache=True, inline="always")
def _objective(r, beta, lam):
    rr = 0.0
    for i in range(r.shape[0]):
        rr += r[i] * r[i]
    l1 = 0.0
    for j in range(beta.shape[0]):
        l1 += abs(beta[j])
    return rr + lam * l1


@njit(cache=True)
def _cd_solve(x, y, beta, lam, tol, max_sweeps):
    """In-place coordinate descent. Returns (sweeps, status, objective).

    status: 0 converged, 1 sweep budget exhausted, 2 objective increased
    (which would indicate a broken update and is treated as fatal upstream),
    3 stalled. A stall is declared when the objective stops decreasing at
    double precision while coefficients still move, or when the largest
    per-sweep step shrinks by less than 1% across 50 sweeps — at that decay
    rate the budget cannot reach ``tol``, so the caller should finish the
    solve directly on the active set instead of sweeping further.
    """
    n, p = x.shape
    col_ss = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            v = x[i, j]
            s += v * v
        col_ss[j] = s
    r = y.copy()
    for j in range(p):
        bj = beta[j]
        if bj != 0.0:
            for i in range(n):
                r[i] -= x[i, j] * bj
    all_idx = np.arange(p)
    prev = _objective(r, beta, lam)
    slack = 1e-9 * (1.0 + prev)
    half = 0.5 * lam
    sweeps = 0
    flat = 0
    ref_maxd = -1.0
    while sweeps < max_sweeps:
        maxd = _pass_over(x, r, beta, all_idx, col_ss, half)
        sweeps += 1
        obj = _objective(r, beta, lam)
        if obj > prev + slack:
            return sweeps, 2, obj
        if prev - obj <= 1e-14 * (1.0 + obj):
            flat += 1
        else:
            flat = 0
        prev = obj
        if maxd <= tol:
            return sweeps, 0, obj
        if flat >= 4:
            return sweeps, 3, obj
        if sweeps % 50 == 0:
            if ref_maxd > 0.0 and maxd > 0.99 * ref_maxd:
                return sweeps, 3, obj
            ref_maxd = maxd
        nact = 0
        for j in range(p):
            if beta[j] != 0.0:
                nact += 1
        if nact:
            act = np.empty(nact, np.intp)
            k = 0
            for j in range(p):
                if beta[j] != 0.0:
                    act[k] = j
                    k += 1
            while sweeps < max_sweeps:
                maxd = _pass_over(x, r, beta, act, col_ss, half)
                sweeps += 1
                obj = _objective(r, beta, lam)
                if obj > prev + slack:
                    return sweeps, 2, obj
                if prev - obj <= 1e-14 * (1.0 + obj):
                    flat += 1
                else:
                    flat = 0
                prev = obj
                if maxd <= tol:
                    break
                if flat >= 4:
                    return sweeps, 3, obj
                if sweeps % 50 == 0:
                    if ref_maxd > 0.0 and maxd > 0.99 * ref_maxd:
                        return sweeps, 3, obj
                    ref_maxd = maxd
    return sweeps, 1, prev


def _kkt_residual(grad: np.ndarray, beta: np.ndarray, lam: float) -> float:
    """Largest violation of the stationarity conditions at ``beta``.

    ``grad`` is 2 X'(y - X beta). Active coordinates must satisfy
    grad_j = lam * sign(beta_j); inactive ones |grad_j| <= lam. Zero means
    a global optimum of the convex objective.
    """
    active = beta != 0.0
    kkt = 0.0
    if active.any():
        kkt = float(np.abs(grad[active] - lam * np.sign(beta[active])).max())
    if (~active).any():
        slack = float(np.abs(grad[~active]).max()) - lam
        kkt = max(kkt, slack, 0.0)
    return kkt


def _polish(x: np.ndarray, y: np.ndarray, lam: float, beta: np.ndarray,
            tol: float) -> np.ndarray | None:
    """Finish a stalled solve by working on the active set directly.

    On the active set with known signs ``s`` the optimum is linear:
    2 X_A'(X_A b - y) + lam * s = 0. Starting from the stalled iterate,
    solve that system, drop any coordinate whose sign flips (smallest
    magnitude first), admit the worst violator outside the set, and stop
    once the full KKT residual is within ``tol`` — the certificate that
    this is a global optimum no matter how the stall looked. Returns the
    polished coefficients, or None if no consistent active set is found.
    """
    p = x.shape[1]
    active = [int(j) for j in np.flatnonzero(beta)]
    signs = [1.0 if beta[j] > 0.0 else -1.0 for j in active]
    for _ in range(4 * p + 16):
        while active:
            cols = x[:, active]
            gram = cols.T @ cols
            rhs = cols.T @ y - 0.5 * lam * np.asarray(signs)
            try:
                sol = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                return None
            bad = [t for t in range(len(active)) if sol[t] * signs[t] <= 0.0]
            if not bad:
                break
            drop = min(bad, key=lambda t: abs(sol[t]))
            del active[drop], signs[drop]
        cand = np.zeros(p)
        if active:
            cand[active] = sol
        grad = 2.0 * (x.T @ (y - x @ cand))
        if _kkt_residual(grad, cand, lam) <= tol:
            return cand
        outside = np.ones(p, dtype=bool)
        outside[active] = False
        if not outside.any():
            return None
        enter = int(np.flatnonzero(outside)[np.abs(grad[outside]).argmax()])
        active.append(enter)
        signs.append(1.0 if grad[enter] > 0.0 else -1.0)
    return None


def _solve(x: np.ndarray, y: np.ndarray, lam: float,
           beta0: np.ndarray | None = None) -> tuple[np.ndarray, float, int, float]:
    """Solve the penalized objective on a raw matrix; returns
    (beta, objective, sweeps, kkt_residual)."""
    x = np.asfortranarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = x.shape
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)
    sweeps, status, obj = _cd_solve(x, y, beta, float(lam), CD_TOL, CD_MAX_SWEEPS)
    if status == 2:
        raise ConvergenceError(
            "coordinate descent objective increased between sweeps "
            "(broken update)")
    grad = 2.0 * (x.T @ (y - x @ beta))
    kkt = _kkt_residual(grad, beta, lam)
    # hitting the sweep budget or stalling is fine if the KKT conditions
    # already hold; otherwise resolve the active set directly
    if kkt > KKT_REL_TOL * n:
        polished = _polish(x, y, lam, beta, KKT_REL_TOL * n)
        if polished is not None:
            beta = polished
            grad = 2.0 * (x.T @ (y - x @ beta))
            kkt = _kkt_residual(grad, beta, lam)
            resid = y - x @ beta
            obj = float(resid @ resid) + lam * float(np.abs(beta).sum())
    if kkt > KKT_REL_TOL * n:
        raise ConvergenceError(
            f"coordinate descent stopped after {sweeps} sweeps with KKT "
            f"residual {kkt:.3e} (allowed {KKT_REL_TOL * n:.1e})",
            kkt_residual=kkt)
    return beta, obj, sweeps, kkt


# ---------------------------------------------------------------------------
# path containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LassoSolution:
    """One penalized solution: full-length beta with its active set."""

    lam: float
    beta_tilde: np.ndarray
    active: tuple[int, ...]
    objective: float
    sweeps: int
    kkt_residual: float


@dataclass(frozen=True)
class ScreenEntry:
    """One candidate model: tuning value, selected columns (sorted), and the
    screening coefficients aligned to ``selected``."""

    lam: float
    selected: tuple[int, ...]
    coef: np.ndarray


@dataclass(frozen=True)
class ScreenPath:
    method: ScreenMethod
    k_n: int
    entries: tuple[ScreenEntry, ...]

    def __post_init__(self):
        for e in self.entries:
            if len(e.selected) > self.k_n:
                raise DimensionMismatchError(
                    f"entry at lambda={e.lam} has {len(e.selected)} > "
                    f"k_n={self.k_n} variables")

    @property
    def lambdas(self) -> tuple[float, ...]:
        return tuple(e.lam for e in self.entries)


def _require_standardized(data: Dataset, who: str):
    if not data.standardized:
        raise DataError(f"{who} requires standardized covariates")


# ---------------------------------------------------------------------------
# lasso
# ---------------------------------------------------------------------------

def lasso_fit(data: Dataset, lam: float,
              beta0: np.ndarray | None = None) -> LassoSolution:
    """Coordinate-descent lasso at a single penalty on standardized data.

    Stops when the largest per-sweep coefficient change is at most 1e-8
    (10,000-sweep budget); verifies the KKT conditions on exit and that the
    objective never increased across sweeps.
    """
    _require_standardized(data, "lasso_fit")
    if lam < 0:
        raise DataError("lambda must be >= 0")
    # beta = 0 is optimal iff max_j |2 x_j'y| <= lam (the KKT condition at
    # zero); check it directly so full shrinkage is exact at the boundary
    grad_at_zero = 2.0 * float(np.abs(data.x.T @ data.y).max())
    if lam >= grad_at_zero:
        y = data.y
        return LassoSolution(lam=float(lam), beta_tilde=np.zeros(data.p),
                             active=(), objective=float(y @ y), sweeps=0,
                             kkt_residual=0.0)
    beta, obj, sweeps, kkt = _solve(data.x, data.y, lam, beta0)
    active = tuple(int(j) for j in np.flatnonzero(beta))
    return LassoSolution(lam=float(lam), beta_tilde=beta, active=active,
                         objective=obj, sweeps=sweeps, kkt_residual=kkt)


def lasso_lambda_grid(x: np.ndarray, y: np.ndarray,
                      grid_size: int = DEFAULT_GRID) -> np.ndarray:
    """Descending log-spaced grid from lambda_max = 2 max_j |x_j'y|.

    The top point is nudged up by 1e-10 relatively so the first entry is the
    empty model even when BLAS and kernel dot products differ in the last
    bit.
    """
    lam_max = 2.0 * float(np.abs(x.T @ y).max())
    if lam_max <= 0.0:
        return np.zeros(1)
    top = lam_max * (1.0 + 1e-10)
    return np.geomspace(top, lam_max * GRID_SPAN, grid_size)


def lasso_path(data: Dataset, k_n: int,
               grid_size: int = DEFAULT_GRID) -> ScreenPath:
    """Warm-started lasso path, largest penalty first.

    Entries are the active sets along the grid; the path stops at the first
    grid point whose active set exceeds ``k_n`` (that point is excluded).
    """
    _require_standardized(data, "lasso_path")
    if k_n < 1:
        raise DataError("k_n must be >= 1")
    grid = lasso_lambda_grid(data.x, data.y, grid_size)
    entries = []
    beta = np.zeros(data.p)
    for lam in grid:
        beta, obj, sweeps, kkt = _solve(data.x, data.y, float(lam), beta)
        active = np.flatnonzero(beta)
        if active.size > k_n:
            break
        sel = tuple(int(j) for j in active)
        entries.append(ScreenEntry(lam=float(lam), selected=sel,
                                   coef=beta[active].copy()))
    return ScreenPath(method=ScreenMethod.LASSO, k_n=k_n,
                      entries=tuple(entries))


# ---------------------------------------------------------------------------
# forward stepwise
# ---------------------------------------------------------------------------

def _stepwise_entries(data: Dataset, steps: int) -> list[ScreenEntry]:
    """Greedy core shared with the LOO folds (which pass masked rows, so no
    standardization is assumed here). Entry sizes run 0..steps."""
    n, p = data.n, data.p
    y = data.y
    entries = [ScreenEntry(lam=0.0, selected=(), coef=np.zeros(0))]
    chosen: list[int] = []
    resid = y.copy()
    in_model = np.zeros(p, dtype=bool)
    for step in range(1, steps + 1):
        mu = data.x.T @ resid / n
        score = np.abs(mu)
        score[in_model] = -1.0
        j = int(np.argmax(score))  # argmax returns first max: lowest index
        chosen.append(j)
        in_model[j] = True
        sel = tuple(sorted(chosen))
        fit = ols_fit(data, sel)  # SingularGramError on duplicate columns
        resid = y - data.x[:, sel] @ fit.coef
        entries.append(ScreenEntry(lam=float(step), selected=sel,
                                   coef=fit.coef.copy()))
    return entries


def stepwise_path(data: Dataset, k_n: int) -> ScreenPath:
    """Greedy forward selection, refitting after every addition.

    Step m picks argmax_j |n^{-1} <x_j, residual>| over the not-yet-selected
    columns (ties to the lowest index), refits least squares on the enlarged
    set, and updates the residual. Entries are the nested models of size
    0..k_n; coefficients are the refit values.
    """
    _require_standardized(data, "stepwise_path")
    n, p = data.n, data.p
    if not 1 <= k_n < n:
        raise DataError(f"need 1 <= k_n < n, got k_n={k_n}, n={n}")
    entries = _stepwise_entries(data, min(k_n, p))
    return ScreenPath(method=ScreenMethod.STEPWISE, k_n=k_n,
                      entries=tuple(entries))


# ---------------------------------------------------------------------------
# marginal regression
# ---------------------------------------------------------------------------

def _marginal_entries(data: Dataset, k: int) -> list[ScreenEntry]:
    """Ranking core shared with the LOO folds (masked rows allowed).
    Entry sizes run 1..k."""
    mu = data.x.T @ data.y / data.n
    order = np.argsort(-np.abs(mu), kind="stable")
    entries = []
    for m in range(1, k + 1):
        top = order[:m]
        sel = tuple(int(j) for j in np.sort(top))
        entries.append(ScreenEntry(lam=float(np.abs(mu[order[m - 1]])),
                                   selected=sel, coef=mu[np.sort(top)].copy()))
    return entries


def marginal_path(data: Dataset, k_n: int) -> ScreenPath:
    """Rank columns by |n^{-1} <y, x_j>| and emit the nested top-m sets.

    Tuning values are the order statistics of the absolute marginal
    coefficients; the entry at the m-th order statistic selects the top-m
    columns (ties to the lowest index). Sizes run 1..k_n: the empty model is
    not a marginal candidate.
    """
    _require_standardized(data, "marginal_path")
    if not 1 <= k_n <= data.p:
        raise DataError(f"need 1 <= k_n <= p, got k_n={k_n}, p={data.p}")
    return ScreenPath(method=ScreenMethod.MARGINAL, k_n=k_n,
                      entries=tuple(_marginal_entries(data, k_n)))


# ---------------------------------------------------------------------------
# adaptive lasso (two-stage competitor refit)
# ---------------------------------------------------------------------------

def adaptive_lasso_fit(data: Dataset, pilot: np.ndarray,
                       lam: float) -> LassoSolution:
    """Weighted lasso with w_j = 1/|pilot_j|; zero-pilot columns excluded.

    Solved by per-coordinate rescaling: columns are multiplied by |pilot_j|,
    the plain solver runs on the rescaled matrix, and coefficients map back.
    """
    pilot = np.asarray(pilot, dtype=np.float64)
    if pilot.shape != (data.p,):
        raise DimensionMismatchError(
            f"pilot length {pilot.shape} != p = {data.p}")
    if lam < 0:
        raise DataError("lambda must be >= 0")
    support = np.flatnonzero(pilot)
    if support.size == 0:
        raise EmptyPilotError("all pilot coefficients are zero")
    scale = np.abs(pilot[support])
    xs = data.x[:, support] * scale
    b, obj, sweeps, kkt = _solve(xs, data.y, lam)
    beta = np.zeros(data.p)
    beta[support] = b * scale
    active = tuple(int(j) for j in np.flatnonzero(beta))
    return LassoSolution(lam=float(lam), beta_tilde=beta, active=active,
                         objective=obj, sweeps=sweeps, kkt_residual=kkt)
