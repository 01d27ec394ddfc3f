"""Stage-II selection: refit screened models and pick one by validation.

Two selectors are provided. ``cv_select`` scores refits on a held-out
split (the three-split route and the shared-split route). ``loo_cv_select``
runs leave-one-out cross-validation inside a single split, re-screening
per fold, and is what the halved variants and the two-stage competitor
use for tuning.

Scoring follows "refit, then validate": each candidate model is refit by
least squares on the training rows and judged by mean squared prediction
error. Ties (within a tiny relative tolerance, to absorb holdout-error
roundoff) break toward the smaller model, then toward the earlier path
position, so pure-noise data can still settle on the empty model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, TrueModel, ols_fit
from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyPathError,
    ModelTooLargeError,
    SingularGramError,
)
from .screeners import (
    DEFAULT_GRID,
    ScreenMethod,
    ScreenPath,
    _marginal_entries,
    _solve,
    _stepwise_entries,
    lasso_path,
    marginal_path,
    stepwise_path,
)

# Near-tie tolerance for validation scores: candidates within
# REL*best + ABS*mean(y^2) of the minimum count as tied.
TIE_REL = 1e-9
TIE_ABS = 1e-10


@dataclass(frozen=True)
class PathFit:
    """A screened model refit by least squares on the training rows."""

    lam: float
    selected: tuple[int, ...]
    coef: np.ndarray          # aligned to ``selected``; empty for the null model
    index: int                # position in the originating path


@dataclass(frozen=True)
class RefitPath:
    method: ScreenMethod
    fits: tuple[PathFit, ...]
    warnings: tuple[str, ...]


@dataclass(frozen=True)
class CvScore:
    """Winner of a validation pass."""

    lam: float
    l_hat: float              # winning mean squared prediction error
    selected: tuple[int, ...]
    coef: np.ndarray
    index: int                # position in the candidate list


def refit_on_path(train: Dataset, path: ScreenPath) -> RefitPath:
    """Least-squares refit of every path entry on ``train``.

    Entries whose Gram matrix is singular (or that have too many variables
    for the rows available) are dropped, each leaving a warning record; the
    survivors keep their original path indices.
    """
    fits = []
    warnings = []
    for idx, entry in enumerate(path.entries):
        try:
            fit = ols_fit(train, entry.selected)
        except (SingularGramError, ModelTooLargeError) as err:
            warnings.append(
                f"path entry {idx} (lambda={entry.lam:g}, "
                f"{len(entry.selected)} vars) dropped: {err}")
            continue
        fits.append(PathFit(lam=entry.lam, selected=entry.selected,
                            coef=fit.coef, index=idx))
    return RefitPath(method=path.method, fits=tuple(fits),
                     warnings=tuple(warnings))


def holdout_mse(fits: tuple[PathFit, ...] | list[PathFit],
                holdout: Dataset) -> np.ndarray:
    """Mean squared prediction error of each refit model on ``holdout``."""
    out = np.empty(len(fits))
    y = holdout.y
    for i, f in enumerate(fits):
        pred = holdout.x[:, f.selected] @ f.coef if f.selected else 0.0
        out[i] = float(np.mean((y - pred) ** 2))
    return out


def _pick_winner(mses: np.ndarray, sizes: list[int],
                 y_sq_scale: float) -> int:
    best = float(mses.min())
    tol = TIE_REL * abs(best) + TIE_ABS * y_sq_scale
    tied = np.flatnonzero(mses <= best + tol)
    order = sorted(tied, key=lambda i: (sizes[i], i))
    return int(order[0])


def cv_select(refits: RefitPath, holdout: Dataset) -> CvScore:
    """Pick the refit model minimizing holdout mean squared error.

    Raises :class:`EmptyPathError` when no refit survived. Near-ties break
    toward fewer variables, then toward the earlier path entry (larger
    penalty first for the lasso route).
    """
    if not refits.fits:
        raise EmptyPathError("no surviving path entries to select from")
    mses = holdout_mse(refits.fits, holdout)
    sizes = [len(f.selected) for f in refits.fits]
    w = _pick_winner(mses, sizes, float(np.mean(holdout.y ** 2)))
    f = refits.fits[w]
    return CvScore(lam=f.lam, l_hat=float(mses[w]), selected=f.selected,
                   coef=f.coef, index=w)


# ---------------------------------------------------------------------------
# leave-one-out CV within a single split
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LooResult:
    """Winner plus the per-candidate leave-one-out curve (for audit)."""

    score: CvScore
    lambdas: np.ndarray
    loo_mse: np.ndarray
    sizes: np.ndarray
    path: ScreenPath          # full-data screen defining the candidates


def _refit_predict(x_tr, y_tr, sel, x_row, cache):
    """OLS refit on (x_tr[:, sel], y_tr), prediction at x_row; singular or
    oversized refits predict 0 (the zero-predictor fallback)."""
    if not sel:
        return 0.0
    hit = cache.get(sel)
    if hit is None:
        cols = list(sel)
        a = x_tr[:, cols]
        n_rows = x_tr.shape[0]
        g = a.T @ a
        if len(sel) >= n_rows or \
                np.linalg.eigvalsh(g / n_rows)[0] < 1e-10:
            hit = np.zeros(0)
        else:
            hit = np.linalg.solve(g, a.T @ y_tr)
        cache[sel] = hit
    if hit.size == 0:
        return 0.0
    return float(x_row[list(sel)] @ hit)


def loo_cv_select(data: Dataset, method: ScreenMethod, k_n: int,
                  grid_size: int = DEFAULT_GRID,
                  refold_screen: bool = True) -> LooResult:
    """Leave-one-out CV over a screening path, all within ``data``.

    The candidate tuning values come from screening the full split (for the
    lasso this freezes the penalty grid). With ``refold_screen`` (the
    default) each fold re-runs the screener on its n-1 rows before
    refitting, so the score reflects the whole screen+refit procedure; with
    it off, the full-split models are frozen and only the refit is redone
    per fold. Each fold works on a row-masked view of the split: columns
    keep the split-level standardization rather than being rescaled per
    fold, so a model that reproduces the response exactly scores exactly
    zero. Folds whose refit is singular contribute the zero-predictor error
    for that row. The winning tuning value is then realized on the full
    split (screen + refit) and returned.
    """
    n = data.n
    if n < 3:
        raise DataError(f"leave-one-out selection needs n >= 3, got {n}")
    if not data.standardized:
        raise DataError("loo_cv_select requires standardized covariates")
    k_eff = min(k_n, data.p if method is not ScreenMethod.STEPWISE
                else min(data.p, n - 2))

    if method is ScreenMethod.LASSO:
        full_path = lasso_path(data, k_eff, grid_size)
        if not full_path.entries:
            raise EmptyPathError("lasso path is empty on the full split")
        cand_lams = np.array(full_path.lambdas)
    elif method is ScreenMethod.STEPWISE:
        full_path = stepwise_path(data, k_eff)
        cand_lams = np.array(full_path.lambdas)
    elif method is ScreenMethod.MARGINAL:
        full_path = marginal_path(data, k_eff)
        cand_lams = np.array(full_path.lambdas)
    else:  # pragma: no cover - enum is closed
        raise DataError(f"unknown screen method {method!r}")

    n_cand = len(full_path.entries)
    sse = np.zeros(n_cand)

    keep = np.ones(n, dtype=bool)
    for i in range(n):
        keep[i] = False
        x_tr = np.asfortranarray(data.x[keep])
        y_tr = data.y[keep]
        keep[i] = True
        x_row = data.x[i]
        y_row = data.y[i]
        cache: dict = {}

        if not refold_screen:
            for c, entry in enumerate(full_path.entries):
                pred = _refit_predict(x_tr, y_tr, entry.selected, x_row, cache)
                sse[c] += (y_row - pred) ** 2
            continue

        if method is ScreenMethod.LASSO:
            beta = np.zeros(data.p)
            alive = True
            for c, lam in enumerate(cand_lams):
                if alive:
                    beta, *_ = _solve(x_tr, y_tr, float(lam), beta)
                    sel = tuple(int(j) for j in np.flatnonzero(beta))
                    if len(sel) > k_eff:
                        # the fold's path outgrew the cap (the full-split
                        # path stops there too); deeper candidates take the
                        # zero-predictor fallback for this row
                        alive = False
                if not alive:
                    sel = ()
                pred = _refit_predict(x_tr, y_tr, sel, x_row, cache)
                sse[c] += (y_row - pred) ** 2
        else:
            k_fold = min(k_eff, x_tr.shape[0] - 1) if \
                method is ScreenMethod.STEPWISE else k_eff
            try:
                # a masked fold can turn rank deficient mid-path; the whole
                # fold then falls back to the zero predictor
                fold_data = Dataset(y=y_tr, x=x_tr, standardized=False)
                if method is ScreenMethod.STEPWISE:
                    fold_entries = _stepwise_entries(fold_data, k_fold)
                else:
                    fold_entries = _marginal_entries(fold_data, k_fold)
            except (SingularGramError, DataError):
                fold_entries = None
            for c in range(n_cand):
                if fold_entries is not None and c < len(fold_entries):
                    sel = fold_entries[c].selected
                else:
                    sel = ()
                pred = _refit_predict(x_tr, y_tr, sel, x_row, cache)
                sse[c] += (y_row - pred) ** 2

    loo_mse = sse / n
    sizes = [len(e.selected) for e in full_path.entries]
    w = _pick_winner(loo_mse, sizes, float(np.mean(data.y ** 2)))
    winner = full_path.entries[w]
    fit = ols_fit(data, winner.selected)
    score = CvScore(lam=winner.lam, l_hat=float(loo_mse[w]),
                    selected=winner.selected, coef=fit.coef, index=w)
    return LooResult(score=score, lambdas=cand_lams, loo_mse=loo_mse,
                     sizes=np.array(sizes), path=full_path)


def oracle_loss(beta_hat: np.ndarray, true_model: TrueModel,
                data: Dataset) -> float:
    """Design-weighted squared estimation error
    (b - beta)' (X'X/n) (b - beta), for diagnostics against the truth."""
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    if beta_hat.shape != (data.p,):
        raise DimensionMismatchError(
            f"beta_hat length {beta_hat.shape} != p = {data.p}")
    if true_model.beta.shape != (data.p,):
        raise DimensionMismatchError(
            f"true beta length {true_model.beta.shape} != p = {data.p}")
    d = beta_hat - true_model.beta
    gram_n = data.x.T @ data.x / data.n
    return float(d @ gram_n @ d)
