"""End-to-end screen/select/clean runs on a single dataset.

``run_screen_and_clean`` wires the three stages together under one of three
splitting schemes:

* ``TRI_SPLIT`` — thirds: screen on part 1, validate on part 2, clean on
  part 3 with the Bonferroni normal critical value;
* ``TWO_SPLIT_EQ13`` — halves, with validation and cleaning sharing the
  second half; the cleaning threshold is the conservative deterministic
  one, which tolerates the reuse;
* ``TWO_SPLIT_LOO`` — halves, with screening and leave-one-out validation
  both inside the first half and cleaning on the untouched second half
  (Bonferroni normal critical value again).

Every stage standardizes its own rows. The screening budget k_n comes from
a rule on the total sample size (floor(sqrt(n)) by default), capped at p.

``run_adaptive_lasso`` is the two-stage competitor: a lasso pilot tuned by
leave-one-out CV on the first half, then a weighted (adaptive) lasso on the
second half with weights 1/|pilot|, also tuned by leave-one-out CV. Its
output is a selected set only — no significance claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cleaner import CleanMode, CleanResult, clean
from .core import (
    Dataset,
    SplitMode,
    SplitPlan,
    ols_fit,
    split,
    standardize,
)
from .errors import DataError, ScreenCleanError, TooFewRowsError
from .screeners import (
    DEFAULT_GRID,
    ScreenMethod,
    ScreenPath,
    _solve,
    lasso_lambda_grid,
    lasso_path,
    marginal_path,
    stepwise_path,
)
from .selection import (
    CvScore,
    _pick_winner,
    cv_select,
    holdout_mse,
    loo_cv_select,
    refit_on_path,
)


class SplitScheme(Enum):
    TRI_SPLIT = "trisplit"
    TWO_SPLIT_EQ13 = "twosplit-eq13"
    TWO_SPLIT_LOO = "twosplit-loo"

    @property
    def split_mode(self) -> SplitMode:
        return (SplitMode.TRI_SPLIT if self is SplitScheme.TRI_SPLIT
                else SplitMode.TWO_SPLIT)


class KRule(Enum):
    SQRT_N = "sqrt"
    A_LOG_N = "alogn"


@dataclass(frozen=True)
class PipelineConfig:
    screener: ScreenMethod = ScreenMethod.LASSO
    splits: SplitScheme = SplitScheme.TRI_SPLIT
    alpha: float = 0.05
    k_rule: KRule = KRule.SQRT_N
    k_const: float = 5.0
    seed: int = 0
    grid_size: int = DEFAULT_GRID
    refold_screen: bool = True
    student: bool = False


@dataclass(frozen=True)
class PipelineResult:
    """Everything a report needs: the cleaned model plus stage audit trails.

    ``cv_lambdas``/``cv_mse``/``cv_sizes`` trace the validation curve over
    the scored candidates; ``path`` is the screening path they came from.
    """

    clean: CleanResult
    score: CvScore
    plan: SplitPlan
    k_n: int
    path: ScreenPath
    cv_lambdas: np.ndarray
    cv_mse: np.ndarray
    cv_sizes: np.ndarray
    config: PipelineConfig
    warnings: tuple[str, ...] = ()

    @property
    def selected(self) -> tuple[int, ...]:
        return self.clean.s_hat

    @property
    def kept(self) -> tuple[int, ...]:
        return self.clean.d_hat


def k_budget(n_total: int, rule: KRule, k_const: float = 5.0) -> int:
    """Screening budget from the total sample size (at least 1)."""
    if rule is KRule.SQRT_N:
        k = int(math.floor(math.sqrt(n_total)))
    else:
        k = int(math.floor(k_const * math.log(n_total)))
    return max(k, 1)


def _screen(data: Dataset, method: ScreenMethod, k: int,
            grid_size: int) -> ScreenPath:
    if method is ScreenMethod.LASSO:
        return lasso_path(data, k, grid_size)
    if method is ScreenMethod.STEPWISE:
        return stepwise_path(data, k)
    return marginal_path(data, k)


def _staged(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScreenCleanError as err:
        err.stage = stage
        raise


def run_screen_and_clean(data: Dataset, config: PipelineConfig) -> PipelineResult:
    """Split, screen, validate, clean; returns the full audit trail.

    Requires enough rows that every split can refit the largest candidate
    model with at least one residual degree of freedom: n >= 3 (k_n + 1)
    for thirds, n >= 2 (k_n + 1) for halves (k_n after capping at p).
    """
    if not 0.0 < config.alpha < 1.0:
        raise DataError(f"alpha must be in (0, 1), got {config.alpha}")
    if config.k_const <= 0:
        raise DataError(f"k_const must be positive, got {config.k_const}")
    n_total = data.n
    k_n = min(k_budget(n_total, config.k_rule, config.k_const), data.p)
    parts = 3 if config.splits is SplitScheme.TRI_SPLIT else 2
    if n_total < parts * (k_n + 1):
        raise TooFewRowsError(
            f"{config.splits.value} with k_n={k_n} needs at least "
            f"{parts * (k_n + 1)} rows, got {n_total}")
    plan = split(n_total, config.splits.split_mode, config.seed)
    groups = [_staged(f"standardize part {i + 1}",
                      lambda g=g: standardize(data.take(g)))
              for i, g in enumerate(plan.indices)]

    if config.splits is SplitScheme.TRI_SPLIT:
        d1, d2, d3 = groups
        path = _staged("screen", _screen, d1, config.screener, k_n,
                       config.grid_size)
        refits = _staged("refit", refit_on_path, d1, path)
        score = _staged("validate", cv_select, refits, d2)
        cv_lams = np.array([f.lam for f in refits.fits])
        cv_mse = holdout_mse(refits.fits, d2)
        cv_sizes = np.array([len(f.selected) for f in refits.fits])
        warnings = refits.warnings
        clean_data, mode = d3, CleanMode.TRI_SPLIT
        clean_kwargs = dict(student=config.student)
    elif config.splits is SplitScheme.TWO_SPLIT_EQ13:
        d1, d2 = groups
        path = _staged("screen", _screen, d1, config.screener, k_n,
                       config.grid_size)
        refits = _staged("refit", refit_on_path, d1, path)
        score = _staged("validate", cv_select, refits, d2)
        cv_lams = np.array([f.lam for f in refits.fits])
        cv_mse = holdout_mse(refits.fits, d2)
        cv_sizes = np.array([len(f.selected) for f in refits.fits])
        warnings = refits.warnings
        clean_data, mode = d2, CleanMode.TWO_SPLIT
        clean_kwargs = dict(n=d2.n, k_n=k_n, p_n=data.p)
    else:  # TWO_SPLIT_LOO
        d1, d2 = groups
        loo = _staged("screen+validate", loo_cv_select, d1, config.screener,
                      k_n, config.grid_size, config.refold_screen)
        score = loo.score
        path = loo.path
        cv_lams = np.asarray(loo.lambdas, dtype=np.float64)
        cv_mse = loo.loo_mse
        cv_sizes = loo.sizes
        warnings = ()
        clean_data, mode = d2, CleanMode.TRI_SPLIT
        clean_kwargs = dict(student=config.student)

    fit = _staged("clean", ols_fit, clean_data, score.selected)
    result = _staged("clean", clean, fit, config.alpha, mode, **clean_kwargs)
    return PipelineResult(clean=result, score=score, plan=plan, k_n=k_n,
                          path=path, cv_lambdas=cv_lams, cv_mse=cv_mse,
                          cv_sizes=cv_sizes, config=config, warnings=warnings)


# ---------------------------------------------------------------------------
# two-stage competitor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompetitorConfig:
    seed: int = 0
    grid_size: int = DEFAULT_GRID


@dataclass(frozen=True)
class AdaptiveResult:
    """Selected set of the two-stage weighted-lasso competitor."""

    selected: tuple[int, ...]
    beta: np.ndarray           # stage-2 estimate, full length
    pilot: np.ndarray          # stage-1 refit coefficients, full length
    lam: float                 # stage-2 penalty chosen by LOO
    plan: SplitPlan
    empty_pilot: bool = False


# Stage-2 regularization slack, in standard errors of the LOO minimum: the
# kept set comes from the most-penalized candidate scoring within this many
# SEs of the best. 0 reproduces the plain minimizer, 1 the classic
# one-standard-error rule; the published operating characteristics of the
# two-stage procedure sit between those endpoints.
STAGE2_SE_SLACK = 0.3


def _penalized_loo(x: np.ndarray, y: np.ndarray, lams: np.ndarray,
                   cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-out error of the penalized predictor along a lambda grid.

    Returns (mean squared error, standard error of that mean) per
    candidate. Each fold warm-walks the grid on its n-1 rows; once a fold's
    active set outgrows ``cap`` the remaining candidates take the
    zero-predictor error for that row (the same convention the screening
    path uses when it stops).
    """
    n, p = x.shape
    sums = np.zeros(lams.size)
    sq_sums = np.zeros(lams.size)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        keep[i] = False
        x_tr = np.asfortranarray(x[keep])
        y_tr = y[keep]
        keep[i] = True
        b = np.zeros(p)
        alive = True
        for c, lam in enumerate(lams):
            if alive:
                b, *_ = _solve(x_tr, y_tr, float(lam), b)
                if np.count_nonzero(b) > cap:
                    alive = False
            pred = float(x[i] @ b) if alive else 0.0
            err = (y[i] - pred) ** 2
            sums[c] += err
            sq_sums[c] += err * err
    mse = sums / n
    var = np.maximum(sq_sums / n - mse ** 2, 0.0) * n / max(n - 1, 1)
    return mse, np.sqrt(var / n)


def run_adaptive_lasso(data: Dataset, config: CompetitorConfig) -> AdaptiveResult:
    """Pilot lasso on half 1, weighted lasso on half 2 (weights 1/|pilot|).

    Both stages tune by leave-one-out CV on the penalized predictor itself
    (the usual lasso cross-validation, in contrast to the screen-and-clean
    pipeline's refit-based scoring). Stage 1 picks the LOO minimizer of the
    pilot path; pilot-zero covariates are excluded from stage 2 (their
    weight is infinite). Both halves are standardized independently, and
    stage 2 follows the same standardize-before-solve convention as every
    other solver entry point: rescaling the surviving columns by |pilot_j|
    and then restoring unit variance cancels the weight magnitudes, so the
    weighting acts through the support restriction while the penalty level
    is retuned by leave-one-out on part 2, where the winner is the most
    penalized candidate within ``STAGE2_SE_SLACK`` standard errors of the
    LOO minimum. An all-zero pilot short-circuits to the empty selection.
    """
    n_total = data.n
    if n_total < 4:
        raise TooFewRowsError(
            f"competitor needs at least 4 rows, got {n_total}")
    plan = split(n_total, SplitMode.TWO_SPLIT, config.seed)
    h1 = _staged("standardize part 1", standardize, data.take(plan.indices[0]))
    h2 = _staged("standardize part 2", standardize, data.take(plan.indices[1]))

    # cap the pilot path at 70% of the rows: past that the active set
    # approaches the interpolation regime where coordinate descent turns
    # ill-conditioned, while tighter caps throttle the screen's recall
    k_cap = max(1, min(data.p, (7 * h1.n) // 10))
    path = _staged("pilot", lasso_path, h1, k_cap, config.grid_size)
    if not path.entries:
        raise DataError("pilot lasso path is empty")
    lams = np.asarray(path.lambdas)
    mse1, _ = _staged("pilot", _penalized_loo, h1.x, h1.y, lams, k_cap)
    sizes1 = [len(e.selected) for e in path.entries]
    w1 = _pick_winner(mse1, sizes1, float(np.mean(h1.y ** 2)))
    support = np.array(path.entries[w1].selected, dtype=np.intp)

    pilot = np.zeros(data.p)
    if support.size == 0:
        return AdaptiveResult(selected=(), beta=np.zeros(data.p),
                              pilot=pilot, lam=math.nan, plan=plan,
                              empty_pilot=True)
    pilot_fit = _staged("pilot", ols_fit, h1, tuple(int(j) for j in support))
    pilot[support] = pilot_fit.coef

    # stage 2: lasso path over the pilot support (weights absorbed by the
    # unit-variance convention), leave-one-out tuned
    xs = np.asfortranarray(h2.x[:, support])
    y2 = h2.y
    grid = lasso_lambda_grid(xs, y2, config.grid_size)

    betas = np.zeros((grid.size, support.size))
    b = np.zeros(support.size)
    for g, lam in enumerate(grid):
        b, *_ = _solve(xs, y2, float(lam), b)
        betas[g] = b
    sizes2 = [int(np.count_nonzero(betas[g])) for g in range(grid.size)]

    mse2, se2 = _staged("stage 2", _penalized_loo, xs, y2, grid,
                        int(support.size))
    w2 = _pick_winner(mse2, sizes2, float(np.mean(y2 ** 2)))
    slack = mse2[w2] + STAGE2_SE_SLACK * se2[w2]
    w2 = int(np.flatnonzero(mse2 <= slack)[0])

    beta = np.zeros(data.p)
    beta[support] = betas[w2]
    selected = tuple(int(j) for j in np.flatnonzero(beta))
    return AdaptiveResult(selected=selected, beta=beta, pilot=pilot,
                          lam=float(grid[w2]), plan=plan, empty_pilot=False)
